#include <catch2/catch.hpp>

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <topodisc/topodisc.hpp>

using namespace topodisc;

namespace {

#ifndef TOPODISC_BIN
#error "TOPODISC_BIN must point at the CLI binary"
#endif

// Scratch directory per test case, removed on destruction.
struct TempDir {
  std::string path;

  TempDir() {
    char tmpl[] = "/tmp/topodisc-test-XXXXXX";
    REQUIRE(mkdtemp(tmpl) != nullptr);
    path = tmpl;
  }
  ~TempDir() {
    int rc = std::system(("rm -rf " + path).c_str());
    (void)rc;
  }

  std::string file(const std::string& name) const { return path + "/" + name; }
};

int run_cli(const std::string& args, const std::string& log = "/dev/null") {
  std::string cmd = std::string(TOPODISC_BIN) + " " + args + " 2>" + log;
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  REQUIRE(out.good());
}

std::string default_fakenet() {
  return "fakenet v1\nseed 5\njitter 0.01\ndefault 50 5 0.008\n";
}

// registry assigning one rank per matrix node
std::string registry_for(const DistanceMatrix& matrix) {
  std::ostringstream out;
  out << "registry v1\nworld " << matrix.nodes().size() << "\n";
  int rank = 0;
  for (const NodeId& node : matrix.nodes()) {
    out << "process " << rank << ' ' << node << ' ' << 2000 + rank << "\n";
    ++rank;
  }
  return out.str();
}

}  // namespace

TEST_CASE("synth plus partition recovers the idpot preset via files") {
  TempDir dir;
  REQUIRE(run_cli("synth --preset idpot --seed 42 -o " + dir.file("matrix") +
                  " --truth " + dir.file("truth")) == 0);
  REQUIRE(run_cli("partition -i " + dir.file("matrix") +
                  " --tolerance 1.20 -o " + dir.file("partition")) == 0);

  Partition got = parse_partition(slurp(dir.file("partition")));
  Partition truth = parse_partition(slurp(dir.file("truth")));
  REQUIRE(got.subnets.size() == 6);
  for (size_t i = 0; i < 6; ++i)
    CHECK(got.subnets[i].members == truth.subnets[i].members);

  REQUIRE(run_cli("plan -i " + dir.file("partition") + " --symmetric -o " +
                  dir.file("plan")) == 0);
  CHECK(parse_plan(slurp(dir.file("plan"))).tasks.size() == 21);
}

TEST_CASE("partition of an edgeless matrix exits zero with singletons") {
  TempDir dir;
  spit(dir.file("matrix"), "matrix v1\nnode a\nnode b\nnode c\n");
  REQUIRE(run_cli("partition -i " + dir.file("matrix") + " -o " +
                  dir.file("partition")) == 0);
  Partition p = parse_partition(slurp(dir.file("partition")));
  CHECK(p.subnets.size() == 3);
  for (const Subnet& s : p.subnets) CHECK(s.members.size() == 1);
}

TEST_CASE("usage errors exit 2, operational errors exit 1") {
  TempDir dir;
  CHECK(run_cli("no-such-subcommand") == 2);
  CHECK(run_cli("partition --frobnicate") == 2);
  CHECK(run_cli("partition") == 2);  // missing required --input
  CHECK(run_cli("partition -i " + dir.file("absent") + " -o /dev/null") == 1);
  spit(dir.file("bad"), "matrix v1\nnode a\nentry a a 10\n");
  CHECK(run_cli("partition -i " + dir.file("bad") + " -o /dev/null") == 1);
  CHECK(run_cli("--help") == 0);
}

TEST_CASE("tree subcommand wires registry and partition together") {
  TempDir dir;
  spit(dir.file("registry"),
       "registry v1\nworld 4\nprocess 0 m1 10\nprocess 1 m1 11\n"
       "process 2 m2 12\nprocess 3 m2 13\n");
  spit(dir.file("partition"),
       "partition v1\ntolerance 1.2\nsubnet 0 inf m1\nsubnet 1 inf m2\n");
  REQUIRE(run_cli("tree -i " + dir.file("registry") + " --partition " +
                  dir.file("partition") + " -o " + dir.file("tree")) == 0);
  GroupTree tree = parse_group_tree(slurp(dir.file("tree")));
  REQUIRE(tree.world.children.size() == 2);
  CHECK(tree.world.children[0].leader == 0);
  CHECK(tree.world.children[1].leader == 2);
}

TEST_CASE("probe and estimate run against a fake network file") {
  TempDir dir;
  spit(dir.file("fakenet"), default_fakenet());
  REQUIRE(run_cli("probe --fake-net " + dir.file("fakenet") +
                  " --src a --dst b --target b --ladder 1:64 -o " +
                  dir.file("timings")) == 0);
  auto blocks = parse_timings(slurp(dir.file("timings")));
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0].task_id == "probe:a:b");
  CHECK(blocks[0].timings.rtt_us.size() == 7);  // 1..64

  REQUIRE(run_cli("estimate -i " + dir.file("timings") + " --ladder 1:64 -o " +
                  dir.file("results")) == 0);
  auto results = parse_results(slurp(dir.file("results")));
  REQUIRE(results.size() == 1);
  CHECK(results[0].params.latency_us == Approx(50.0).epsilon(0.05));
}

TEST_CASE("measure sweeps a fake network into a matrix") {
  TempDir dir;
  spit(dir.file("fakenet"), default_fakenet());
  REQUIRE(run_cli("measure --fake-net " + dir.file("fakenet") +
                  " --node a --node b --node c --ladder 1:16 -o " +
                  dir.file("matrix")) == 0);
  DistanceMatrix m = parse_distance_matrix(slurp(dir.file("matrix")));
  CHECK(m.nodes().size() == 3);
  CHECK(m.entries().size() == 6);
}

TEST_CASE("pipeline stages are byte-identical across runs and re-parse") {
  TempDir dir;
  REQUIRE(run_cli("synth --preset idpot --seed 7 -o " + dir.file("matrix")) ==
          0);
  spit(dir.file("registry"),
       registry_for(parse_distance_matrix(slurp(dir.file("matrix")))));
  spit(dir.file("fakenet"), default_fakenet());

  std::string common = "pipeline -i " + dir.file("matrix") + " --registry " +
                       dir.file("registry") + " --fake-net " +
                       dir.file("fakenet") + " --ladder 1:256 --rounds 6";
  REQUIRE(run_cli(common + " --workdir " + dir.file("run1")) == 0);
  REQUIRE(run_cli(common + " --workdir " + dir.file("run2")) == 0);

  for (const char* stage : {"matrix", "partition", "trace", "registry", "tree",
                            "plan", "timings", "results", "params"}) {
    INFO(stage);
    std::string first = slurp(dir.file("run1/") + stage);
    CHECK(first == slurp(dir.file("run2/") + stage));
    CHECK_FALSE(first.empty());
  }

  // every stage artifact re-parses under the owning module's parser
  DistanceMatrix matrix = parse_distance_matrix(slurp(dir.file("run1/matrix")));
  Partition partition = parse_partition(slurp(dir.file("run1/partition")));
  MergeTrace trace = parse_trace(slurp(dir.file("run1/trace")));
  ProcessRegistry registry = parse_registry(slurp(dir.file("run1/registry")));
  GroupTree tree = parse_group_tree(slurp(dir.file("run1/tree")));
  MeasurementPlan plan = parse_plan(slurp(dir.file("run1/plan")));
  auto blocks = parse_timings(slurp(dir.file("run1/timings")));
  auto results = parse_results(slurp(dir.file("run1/results")));

  CHECK(matrix.nodes().size() == 20);
  CHECK(partition.subnets.size() == 6);
  CHECK(trace.decisions.size() == 20 * 19 / 2);
  CHECK(registry.world_size() == 20);
  CHECK(tree.world.children.size() == 6);
  CHECK(plan.tasks.size() == 21);
  CHECK(blocks.size() == 21);
  CHECK(results.size() == 21);

  LinkParamMap map = extrapolate(plan, results_by_task(results), partition);
  CHECK(serialize_link_params(map) == slurp(dir.file("run1/params")));
}

TEST_CASE("pipeline without execution inputs stops after the plan") {
  TempDir dir;
  REQUIRE(run_cli("synth --preset idpot --seed 3 -o " + dir.file("matrix")) ==
          0);
  REQUIRE(run_cli("pipeline -i " + dir.file("matrix") + " --workdir " +
                  dir.file("out")) == 0);
  CHECK(std::ifstream(dir.file("out/plan")).good());
  CHECK_FALSE(std::ifstream(dir.file("out/timings")).good());
  CHECK_FALSE(std::ifstream(dir.file("out/tree")).good());
}

TEST_CASE("pipeline failures name the failing stage") {
  TempDir dir;
  REQUIRE(run_cli("synth --preset idpot --seed 3 -o " + dir.file("matrix")) ==
          0);
  spit(dir.file("registry"), "registry v1\nworld 1\nprocess 0 nothere 5\n");
  std::string log = dir.file("err.log");
  CHECK(run_cli("pipeline -i " + dir.file("matrix") + " --registry " +
                    dir.file("registry") + " --workdir " + dir.file("out"),
                log) == 1);
  CHECK(slurp(log).find("stage 'tree'") != std::string::npos);
  // earlier stage outputs are preserved
  CHECK(std::ifstream(dir.file("out/partition")).good());
}
