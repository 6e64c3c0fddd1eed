// topodisc: discovers latency-homogeneous subnets from partial network
// measurements, groups co-located processes, builds the machine/subnet/world
// hierarchy and plans the reduced pLogP measurement schedule.
//
// Logs go to stderr; data goes to files or stdout, so stages compose.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <topodisc/topodisc.hpp>

namespace td = topodisc;

namespace {

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream buffer;
    buffer << std::cin.rdbuf();
    return buffer.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw td::Error("cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw td::Error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw td::Error("short write to '" + path + "'");
}

// Ladder spec: either a comma list of byte sizes ("1,64,4096") or a doubling
// range "min:max". Empty means the default 1 B .. 1 MiB powers of two.
td::MessageSizeLadder parse_ladder(const std::string& spec) {
  if (spec.empty()) return td::MessageSizeLadder::powers_of_two();
  td::MessageSizeLadder ladder;
  size_t colon = spec.find(':');
  if (colon != std::string::npos && spec.find(',') == std::string::npos) {
    uint64_t lo = 0, hi = 0;
    if (!td::try_parse_u64(std::string_view(spec).substr(0, colon), lo) ||
        !td::try_parse_u64(std::string_view(spec).substr(colon + 1), hi))
      throw td::ValidationError("bad ladder range '" + spec + "'");
    ladder = td::MessageSizeLadder::powers_of_two(lo, hi);
  } else {
    std::istringstream fields(spec);
    std::string field;
    while (std::getline(fields, field, ',')) {
      uint64_t size = 0;
      if (!td::try_parse_u64(field, size))
        throw td::ValidationError("bad ladder size '" + field + "'");
      ladder.sizes.push_back(size);
    }
  }
  ladder.validate();
  return ladder;
}

// --- endpoints file ----------------------------------------------------------
//
//   endpoints v1
//   endpoint <node> <host:port>

std::map<td::NodeId, td::Endpoint> parse_endpoints(std::string_view text,
                                                   const std::string& source) {
  td::LineScanner in(text, source);
  in.expect_header("endpoints");
  std::map<td::NodeId, td::Endpoint> map;
  while (in.next()) {
    if (in.keyword() != "endpoint")
      in.fail("unknown record '" + in.keyword() + "'");
    in.want(3);
    map[in.tok(1)] = td::Endpoint::parse(in.tok(2));
  }
  return map;
}

struct ProbeFlags {
  std::string ladder_spec;
  int rounds = 30;
  int warmup = 5;
  int burst = 64;

  td::ProbeConfig config() const {
    td::ProbeConfig c;
    c.rounds = rounds;
    c.warmup = warmup;
    c.burst_length = burst;
    c.validate();
    return c;
  }

  void add_to(CLI::App* cmd) {
    cmd->add_option("--ladder", ladder_spec,
                    "message sizes: 'min:max' doubling or comma list "
                    "(default 1:1048576)");
    cmd->add_option("--rounds", rounds, "timed round-trips per size");
    cmd->add_option("--warmup", warmup, "discarded exchanges per size");
    cmd->add_option("--burst", burst, "burst length for the gap phase");
  }
};

// "id=host:port", or a bare node id when a fake network supplies the links.
std::pair<td::NodeId, td::Endpoint> parse_node_flag(const std::string& value,
                                                    bool fake) {
  size_t eq = value.find('=');
  if (eq == std::string::npos) {
    if (!fake)
      throw td::ValidationError("--node needs id=host:port (got '" + value +
                                "')");
    return {value, td::Endpoint{value, 0}};
  }
  return {value.substr(0, eq), td::Endpoint::parse(value.substr(eq + 1))};
}

std::unique_ptr<td::Transport> make_transport(const std::string& fakenet_path) {
  if (fakenet_path.empty()) return std::make_unique<td::TcpTransport>();
  return std::make_unique<td::FakeTransport>(
      td::FakeTransport::from_file(read_file(fakenet_path), fakenet_path));
}

std::vector<td::TimingsBlock> execute_plan(
    const td::MeasurementPlan& plan, td::Transport& transport,
    const std::map<td::NodeId, td::Endpoint>& endpoints,
    const td::MessageSizeLadder& ladder, const td::ProbeConfig& config) {
  auto endpoint_for = [&](const td::NodeId& node) {
    auto it = endpoints.find(node);
    if (it != endpoints.end()) return it->second;
    return td::Endpoint{node, 0};  // fake transport addressing
  };
  std::vector<td::TimingsBlock> blocks;
  for (const td::MeasurementTask& task : plan.tasks) {
    std::cerr << "measuring " << task.id() << " (" << task.node_a << " -> "
              << task.node_b << ")\n";
    blocks.push_back({task.id(), td::probe(transport, task.node_a, task.node_b,
                                           endpoint_for(task.node_b), ladder,
                                           config)});
  }
  return blocks;
}

volatile std::sig_atomic_t g_stop_requested = 0;

void handle_stop_signal(int) { g_stop_requested = 1; }

void wait_for_stop() {
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  while (!g_stop_requested)
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

int run_pipeline(const std::string& workdir_flag, const std::string& input,
                 const std::vector<std::string>& node_flags,
                 const std::string& registry_path, double tolerance,
                 bool asymmetric, const std::string& endpoints_path,
                 const std::string& fakenet_path, const ProbeFlags& probing) {
  std::string workdir = workdir_flag;
  if (workdir.empty()) {
    const char* env = std::getenv("TOPODISC_WORKDIR");
    if (env != nullptr) workdir = env;
  }
  if (workdir.empty())
    throw td::ValidationError(
        "no work directory: pass --workdir or set TOPODISC_WORKDIR");
  std::filesystem::create_directories(workdir);
  auto stage_path = [&](const char* name) { return workdir + "/" + name; };

  std::string stage = "matrix";
  try {
    td::DistanceMatrix matrix;
    if (!input.empty()) {
      matrix = td::parse_distance_matrix(read_file(input), input);
    } else if (!node_flags.empty()) {
      auto transport = make_transport(fakenet_path);
      std::vector<std::pair<td::NodeId, td::Endpoint>> nodes;
      for (const std::string& flag : node_flags)
        nodes.push_back(parse_node_flag(flag, !fakenet_path.empty()));
      matrix =
          td::measure_matrix(*transport, nodes,
                             parse_ladder(probing.ladder_spec), probing.config());
    } else {
      throw td::ValidationError("pipeline needs --input or --node");
    }
    write_output(stage_path("matrix"), td::serialize_distance_matrix(matrix));
    std::cerr << "stage matrix: " << matrix.nodes().size() << " nodes, "
              << matrix.entries().size() << " entries\n";

    stage = "partition";
    auto run = td::partition_with_trace(td::symmetrize(matrix), matrix.nodes(),
                                        {tolerance});
    write_output(stage_path("partition"),
                 td::serialize_partition(run.partition));
    write_output(stage_path("trace"), td::serialize_trace(run.trace));
    std::cerr << "stage partition: " << run.partition.subnets.size()
              << " subnets\n";

    stage = "tree";
    if (!registry_path.empty()) {
      td::ProcessRegistry registry =
          td::parse_registry(read_file(registry_path), registry_path);
      write_output(stage_path("registry"), td::serialize_registry(registry));
      td::GroupTree tree = td::build_group_tree(registry, run.partition);
      write_output(stage_path("tree"), td::serialize_group_tree(tree));
      std::cerr << "stage tree: " << tree.world.children.size()
                << " subnet groups\n";
    } else {
      std::cerr << "stage tree: skipped (no --registry)\n";
    }

    stage = "plan";
    td::MeasurementPlan plan =
        td::plan_measurements(run.partition, !asymmetric);
    write_output(stage_path("plan"), td::serialize_plan(plan));
    std::cerr << "stage plan: " << plan.tasks.size() << " tasks\n";

    if (endpoints_path.empty() && fakenet_path.empty()) {
      std::cerr << "stage timings: skipped (no --endpoints or --fake-net)\n";
      return 0;
    }

    stage = "timings";
    std::map<td::NodeId, td::Endpoint> endpoints;
    if (!endpoints_path.empty())
      endpoints = parse_endpoints(read_file(endpoints_path), endpoints_path);
    auto transport = make_transport(fakenet_path);
    td::MessageSizeLadder ladder = parse_ladder(probing.ladder_spec);
    std::vector<td::TimingsBlock> blocks =
        execute_plan(plan, *transport, endpoints, ladder, probing.config());
    write_output(stage_path("timings"), td::serialize_timings(blocks));

    stage = "results";
    std::vector<td::TaskResult> results;
    for (const td::TimingsBlock& block : blocks)
      results.push_back(
          {block.task_id, td::estimate_params(block.timings, ladder)});
    write_output(stage_path("results"), td::serialize_results(results));

    stage = "params";
    td::LinkParamMap map =
        td::extrapolate(plan, td::results_by_task(results), run.partition);
    write_output(stage_path("params"), td::serialize_link_params(map));
    std::cerr << "stage params: " << map.blocks().size() << " blocks\n";
    return 0;
  } catch (const td::Error& e) {
    throw td::Error("pipeline stage '" + stage + "' failed: " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "network topology discovery: latency clustering, process co-location "
      "and pLogP measurement planning"};
  app.require_subcommand(1);

  // synth ----------------------------------------------------------------
  auto* synth = app.add_subcommand(
      "synth", "generate a synthetic distance matrix with planted groups");
  std::string synth_preset, synth_spec, synth_out, synth_truth;
  uint64_t synth_seed = 0;
  double synth_jitter = -1.0;
  auto* synth_seed_opt =
      synth->add_option("--seed", synth_seed, "override the scenario seed");
  synth->add_option("--preset", synth_preset, "built-in scenario (idpot)");
  synth->add_option("--spec", synth_spec, "scenario file");
  synth->add_option("--jitter", synth_jitter,
                    "override the jitter fraction [0,0.05]");
  synth->add_option("-o,--output", synth_out, "matrix output (default stdout)");
  synth->add_option("--truth", synth_truth, "write the planted partition here");

  // partition ---------------------------------------------------------------
  auto* part = app.add_subcommand(
      "partition", "cluster a distance matrix into logical subnets");
  std::string part_in, part_out, part_trace;
  double part_tolerance = td::kDefaultTolerance;
  part->add_option("-i,--input", part_in, "distance matrix file")->required();
  part->add_option("--tolerance", part_tolerance,
                   "threshold factor (default 1.20)")
      ->check(CLI::Range(1.0, 1e9));
  part->add_option("-o,--output", part_out,
                   "partition output (default stdout)");
  part->add_option("--trace", part_trace, "write the merge trace here");

  // plan ----------------------------------------------------------------
  auto* plan_cmd = app.add_subcommand(
      "plan", "plan the reduced pLogP measurement schedule");
  std::string plan_in, plan_out;
  bool plan_symmetric = false, plan_asymmetric = false;
  plan_cmd->add_option("-i,--input", plan_in, "partition file")->required();
  plan_cmd->add_flag("--symmetric", plan_symmetric,
                     "assume a->b == b->a (default)");
  plan_cmd->add_flag("--asymmetric", plan_asymmetric,
                     "measure both directions of every subnet pair");
  plan_cmd->add_option("-o,--output", plan_out, "plan output (default stdout)");

  // probe-serve ------------------------------------------------------------
  auto* serve_cmd =
      app.add_subcommand("probe-serve", "run the probe echo server");
  std::string serve_listen = "0.0.0.0:7901";
  serve_cmd->add_option("--listen", serve_listen, "bind address (host:port)");

  // probe ----------------------------------------------------------------
  auto* probe_cmd =
      app.add_subcommand("probe", "measure one directed pair in full");
  std::string probe_target, probe_src = "local", probe_dst, probe_task,
              probe_out, probe_fakenet;
  ProbeFlags probe_flags;
  probe_cmd
      ->add_option("--target", probe_target,
                   "probe server host:port (node id with --fake-net)")
      ->required();
  probe_cmd->add_option("--src", probe_src, "vantage node id");
  probe_cmd->add_option("--dst", probe_dst,
                        "target node id (default: the target address)");
  probe_cmd->add_option("--task", probe_task,
                        "timings block label (default probe:<src>:<dst>)");
  probe_cmd->add_option("--fake-net", probe_fakenet,
                        "run against a planted fake network file");
  probe_flags.add_to(probe_cmd);
  probe_cmd->add_option("-o,--output", probe_out,
                        "timings output (default stdout)");

  // measure ----------------------------------------------------------------
  auto* measure_cmd = app.add_subcommand(
      "measure", "sweep an NWS-style distance matrix over probe servers");
  std::vector<std::string> measure_nodes;
  std::string measure_out, measure_fakenet;
  ProbeFlags measure_flags;
  measure_cmd
      ->add_option("--node", measure_nodes,
                   "probed node as id=host:port (repeatable)")
      ->required();
  measure_cmd->add_option("--fake-net", measure_fakenet,
                          "run against a planted fake network file");
  measure_flags.add_to(measure_cmd);
  measure_cmd->add_option("-o,--output", measure_out,
                          "matrix output (default stdout)");

  // rendezvous-root ----------------------------------------------------------
  auto* root_cmd = app.add_subcommand(
      "rendezvous-root", "collect process registrations into a registry");
  std::string root_listen = "0.0.0.0:7900", root_out;
  int root_world = 0;
  double root_deadline_s = 30.0;
  root_cmd->add_option("--listen", root_listen, "bind address (host:port)");
  root_cmd->add_option("--world-size", root_world, "expected process count")
      ->required()
      ->check(CLI::PositiveNumber);
  root_cmd->add_option("--deadline", root_deadline_s,
                       "seconds to wait for the full world");
  root_cmd->add_option("-o,--output", root_out,
                       "registry output (default stdout)");

  // rendezvous-register ---------------------------------------------------------
  auto* reg_cmd = app.add_subcommand("rendezvous-register",
                                     "register this process with the root");
  std::string reg_root, reg_hostname;
  int reg_rank = -1;
  int64_t reg_pid = 0;
  int reg_retries = 3;
  reg_cmd->add_option("--root", reg_root, "root host:port")->required();
  reg_cmd->add_option("--rank", reg_rank, "this process's rank")
      ->required()
      ->check(CLI::NonNegativeNumber);
  reg_cmd->add_option("--hostname", reg_hostname,
                      "reported hostname (default: gethostname)");
  reg_cmd->add_option("--pid", reg_pid, "reported pid (default: getpid)");
  reg_cmd->add_option("--retries", reg_retries, "connection retry count");

  // tree ----------------------------------------------------------------
  auto* tree_cmd = app.add_subcommand(
      "tree", "build the machine/subnet/world group hierarchy");
  std::string tree_registry, tree_partition, tree_out;
  tree_cmd->add_option("-i,--input", tree_registry, "registry file")
      ->required();
  tree_cmd->add_option("--partition", tree_partition, "partition file")
      ->required();
  tree_cmd->add_option("-o,--output", tree_out,
                       "tree output (default stdout)");

  // estimate ----------------------------------------------------------------
  auto* est_cmd = app.add_subcommand(
      "estimate", "turn raw timings into pLogP parameters per task");
  std::string est_in, est_out, est_ladder;
  est_cmd->add_option("-i,--input", est_in, "timings file")->required();
  est_cmd->add_option("--ladder", est_ladder,
                      "ladder the timings were taken at (default 1:1048576)");
  est_cmd->add_option("-o,--output", est_out,
                      "results output (default stdout)");

  // extrapolate ---------------------------------------------------------------
  auto* extra_cmd = app.add_subcommand(
      "extrapolate", "spread task results over every directed pair");
  std::string extra_plan, extra_results, extra_partition, extra_out;
  extra_cmd->add_option("--plan", extra_plan, "plan file")->required();
  extra_cmd->add_option("--results", extra_results, "results file")
      ->required();
  extra_cmd->add_option("--partition", extra_partition, "partition file")
      ->required();
  extra_cmd->add_option("-o,--output", extra_out,
                        "parameter map output (default stdout)");

  // pipeline ----------------------------------------------------------------
  auto* pipe_cmd = app.add_subcommand(
      "pipeline", "run the whole discovery flow into a work directory");
  std::string pipe_workdir, pipe_input, pipe_registry, pipe_endpoints,
      pipe_fakenet;
  std::vector<std::string> pipe_nodes;
  double pipe_tolerance = td::kDefaultTolerance;
  bool pipe_symmetric = false, pipe_asymmetric = false;
  ProbeFlags pipe_flags;
  pipe_cmd->add_option("--workdir", pipe_workdir,
                       "stage output directory (default $TOPODISC_WORKDIR)");
  pipe_cmd->add_option("-i,--input", pipe_input, "existing distance matrix");
  pipe_cmd->add_option("--node", pipe_nodes,
                       "measure the matrix from these id=host:port nodes");
  pipe_cmd->add_option("--registry", pipe_registry,
                       "process registry for the tree stage");
  pipe_cmd->add_option("--tolerance", pipe_tolerance, "threshold factor")
      ->check(CLI::Range(1.0, 1e9));
  pipe_cmd->add_flag("--symmetric", pipe_symmetric,
                     "symmetric plan (default)");
  pipe_cmd->add_flag("--asymmetric", pipe_asymmetric, "ordered-pair plan");
  pipe_cmd->add_option("--endpoints", pipe_endpoints,
                       "endpoints file for executing the plan");
  pipe_cmd->add_option("--fake-net", pipe_fakenet,
                       "execute the plan against a planted fake network");
  pipe_flags.add_to(pipe_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      td::ScenarioSpec spec;
      if (!synth_spec.empty())
        spec = td::parse_scenario(read_file(synth_spec), synth_spec);
      else if (synth_preset == "idpot")
        spec = td::idpot_preset();
      else if (synth_preset.empty())
        throw td::ValidationError("synth needs --preset or --spec");
      else
        throw td::ValidationError("unknown preset '" + synth_preset + "'");
      if (!synth_seed_opt->empty()) spec.seed = synth_seed;
      if (synth_jitter >= 0) spec.jitter_fraction = synth_jitter;
      td::SynthResult result = td::generate(spec);
      write_output(synth_out, td::serialize_distance_matrix(result.matrix));
      if (!synth_truth.empty())
        write_output(synth_truth,
                     td::serialize_partition(result.ground_truth));
    } else if (*part) {
      td::DistanceMatrix matrix =
          td::parse_distance_matrix(read_file(part_in), part_in);
      auto run = td::partition_with_trace(td::symmetrize(matrix),
                                          matrix.nodes(), {part_tolerance});
      write_output(part_out, td::serialize_partition(run.partition));
      if (!part_trace.empty())
        write_output(part_trace, td::serialize_trace(run.trace));
      std::cerr << run.partition.subnets.size() << " subnets\n";
    } else if (*plan_cmd) {
      if (plan_symmetric && plan_asymmetric)
        throw td::ValidationError("--symmetric and --asymmetric conflict");
      td::Partition partition =
          td::parse_partition(read_file(plan_in), plan_in);
      td::MeasurementPlan plan =
          td::plan_measurements(partition, !plan_asymmetric);
      write_output(plan_out, td::serialize_plan(plan));
      std::cerr << plan.tasks.size() << " tasks\n";
    } else if (*serve_cmd) {
      td::ProbeServer server;
      server.start(td::Endpoint::parse(serve_listen));
      std::cerr << "serving probes on port " << server.port() << "\n";
      wait_for_stop();
      server.stop();
    } else if (*probe_cmd) {
      auto transport = make_transport(probe_fakenet);
      td::Endpoint target = probe_fakenet.empty()
                                ? td::Endpoint::parse(probe_target)
                                : td::Endpoint{probe_target, 0};
      if (probe_dst.empty()) probe_dst = probe_target;
      if (probe_task.empty())
        probe_task = "probe:" + probe_src + ":" + probe_dst;
      td::RawTimings raw = td::probe(*transport, probe_src, probe_dst, target,
                                     parse_ladder(probe_flags.ladder_spec),
                                     probe_flags.config());
      write_output(probe_out, td::serialize_timings({{probe_task, raw}}));
    } else if (*measure_cmd) {
      auto transport = make_transport(measure_fakenet);
      std::vector<std::pair<td::NodeId, td::Endpoint>> nodes;
      for (const std::string& flag : measure_nodes)
        nodes.push_back(parse_node_flag(flag, !measure_fakenet.empty()));
      td::DistanceMatrix matrix = td::measure_matrix(
          *transport, nodes, parse_ladder(measure_flags.ladder_spec),
          measure_flags.config());
      write_output(measure_out, td::serialize_distance_matrix(matrix));
    } else if (*root_cmd) {
      td::RendezvousRoot root(td::Endpoint::parse(root_listen));
      std::cerr << "collecting " << root_world << " registrations on port "
                << root.port() << "\n";
      td::ProcessRegistry registry = root.collect(
          root_world,
          std::chrono::milliseconds(int64_t(root_deadline_s * 1000)));
      write_output(root_out, td::serialize_registry(registry));
    } else if (*reg_cmd) {
      td::RendezvousConfig config;
      config.max_retries = reg_retries;
      td::register_with_root(reg_rank, td::Endpoint::parse(reg_root),
                             reg_hostname, reg_pid, config);
      std::cerr << "rank " << reg_rank << " registered\n";
    } else if (*tree_cmd) {
      td::ProcessRegistry registry =
          td::parse_registry(read_file(tree_registry), tree_registry);
      td::Partition partition =
          td::parse_partition(read_file(tree_partition), tree_partition);
      td::GroupTree tree = td::build_group_tree(registry, partition);
      write_output(tree_out, td::serialize_group_tree(tree));
    } else if (*est_cmd) {
      td::MessageSizeLadder ladder = parse_ladder(est_ladder);
      std::vector<td::TaskResult> results;
      for (const td::TimingsBlock& block :
           td::parse_timings(read_file(est_in), est_in))
        results.push_back(
            {block.task_id, td::estimate_params(block.timings, ladder)});
      write_output(est_out, td::serialize_results(results));
    } else if (*extra_cmd) {
      td::MeasurementPlan plan =
          td::parse_plan(read_file(extra_plan), extra_plan);
      std::vector<td::TaskResult> results =
          td::parse_results(read_file(extra_results), extra_results);
      td::Partition partition =
          td::parse_partition(read_file(extra_partition), extra_partition);
      td::LinkParamMap map =
          td::extrapolate(plan, td::results_by_task(results), partition);
      write_output(extra_out, td::serialize_link_params(map));
    } else if (*pipe_cmd) {
      if (pipe_symmetric && pipe_asymmetric)
        throw td::ValidationError("--symmetric and --asymmetric conflict");
      return run_pipeline(pipe_workdir, pipe_input, pipe_nodes, pipe_registry,
                          pipe_tolerance, pipe_asymmetric, pipe_endpoints,
                          pipe_fakenet, pipe_flags);
    }
    return 0;
  } catch (const td::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
