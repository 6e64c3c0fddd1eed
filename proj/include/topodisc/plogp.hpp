#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "text.hpp"
#include "timings.hpp"

namespace topodisc {

// Link characterization: end-to-end latency L plus the size-dependent gap
// g(m), the minimum interval between consecutive sends at saturation.
struct PLogPParams {
  double latency_us = 0.0;
  std::map<uint64_t, double> gap_us_by_size;
  std::map<uint64_t, int> samples;  // RTT sample count behind each point
  // A non-positive latency estimate marks a model violation; the raw value is
  // kept rather than clamped so the caller can see what happened.
  bool model_violation = false;

  bool operator==(const PLogPParams&) const = default;
};

struct MeasurementTask {
  enum class Kind { intra, inter };
  Kind kind = Kind::intra;
  int subnet_a = 0;
  int subnet_b = 0;  // == subnet_a for intra tasks
  NodeId node_a;     // representative pair to actually probe
  NodeId node_b;

  std::string id() const {
    if (kind == Kind::intra) return "intra:" + std::to_string(subnet_a);
    return "inter:" + std::to_string(subnet_a) + ":" + std::to_string(subnet_b);
  }

  bool operator==(const MeasurementTask&) const = default;
};

struct MeasurementPlan {
  bool symmetric = true;
  std::vector<MeasurementTask> tasks;

  bool operator==(const MeasurementPlan&) const = default;
};

// One intra measurement per subnet that actually has a pair, plus one per
// subnet pair: unordered pairs when links are assumed symmetric, ordered
// otherwise. Representatives are the lexicographically smallest members, so
// the plan is a pure function of the partition. With C subnets of >= 2
// members the symmetric plan has exactly C + C(C-1)/2 = C(C+1)/2 tasks.
inline MeasurementPlan plan_measurements(const Partition& partition,
                                         bool symmetric) {
  MeasurementPlan plan;
  plan.symmetric = symmetric;
  const auto& subnets = partition.subnets;
  for (size_t i = 0; i < subnets.size(); ++i) {
    if (subnets[i].members.size() < 2) continue;  // no pair to measure
    MeasurementTask task;
    task.kind = MeasurementTask::Kind::intra;
    task.subnet_a = task.subnet_b = int(i);
    task.node_a = subnets[i].members[0];
    task.node_b = subnets[i].members[1];
    plan.tasks.push_back(std::move(task));
  }
  for (size_t i = 0; i < subnets.size(); ++i) {
    for (size_t j = symmetric ? i + 1 : 0; j < subnets.size(); ++j) {
      if (i == j) continue;
      MeasurementTask task;
      task.kind = MeasurementTask::Kind::inter;
      task.subnet_a = int(i);
      task.subnet_b = int(j);
      task.node_a = subnets[i].members.front();
      task.node_b = subnets[j].members.front();
      plan.tasks.push_back(std::move(task));
    }
  }
  return plan;
}

// Running maximum, so the gap curve is nondecreasing in the message size.
inline std::map<uint64_t, double> monotonize_gap(
    const std::map<uint64_t, double>& gap) {
  std::map<uint64_t, double> out;
  double running = 0.0;
  for (const auto& [size, value] : gap) {
    running = std::max(running, value);
    out[size] = running;
  }
  return out;
}

inline constexpr int kMinRttSamples = 5;

// Splits raw probe timings into pLogP parameters. Per size, RTT(m) is the
// median of the round-trip samples and g(m) is the steady-state burst
// interval, monotonized by running maximum. With m0 the smallest ladder size
// and the echo reply paying one more gap of the same size,
//
//   RTT(m0) = 2L + g(m0) + g(ack),  g(ack) = g(m0)
//
// so L = (RTT(m0) - 2 g(m0)) / 2. This decomposition is one consistent
// reading of the latency/gap split; it is validated closed-loop against the
// deterministic fake transport, which realizes exactly this cost model.
inline PLogPParams estimate_params(const RawTimings& raw,
                                   const MessageSizeLadder& ladder) {
  ladder.validate();
  PLogPParams params;
  std::map<uint64_t, double> gap_raw;
  for (uint64_t size : ladder.sizes) {
    auto rtt = raw.rtt_us.find(size);
    if (rtt == raw.rtt_us.end() ||
        rtt->second.size() < size_t(kMinRttSamples))
      throw EstimationError("insufficient samples for size " +
                            std::to_string(size) + " (need >= " +
                            std::to_string(kMinRttSamples) + ")");
    for (double v : rtt->second)
      if (!(v > 0))
        throw EstimationError("non-positive round-trip sample at size " +
                              std::to_string(size));
    auto burst = raw.burst_interval_us.find(size);
    if (burst == raw.burst_interval_us.end() || !(burst->second > 0))
      throw EstimationError("missing burst measurement for size " +
                            std::to_string(size));
    gap_raw[size] = burst->second;
    params.samples[size] = int(rtt->second.size());
  }
  params.gap_us_by_size = monotonize_gap(gap_raw);

  uint64_t m0 = ladder.sizes.front();
  double rtt0 = median(raw.rtt_us.at(m0));
  params.latency_us = (rtt0 - 2.0 * gap_raw.at(m0)) / 2.0;
  params.model_violation = !(params.latency_us > 0);
  return params;
}

// Per-directed-pair parameter map, constant within each (subnet, subnet)
// block as measured through the representatives.
class LinkParamMap {
 public:
  LinkParamMap() = default;

  static LinkParamMap build(const MeasurementPlan& plan,
                            const std::map<std::string, PLogPParams>& results,
                            const Partition& partition) {
    LinkParamMap map;
    map.symmetric_ = plan.symmetric;
    for (size_t i = 0; i < partition.subnets.size(); ++i)
      for (const NodeId& member : partition.subnets[i].members)
        map.subnet_of_[member] = int(i);

    for (const MeasurementTask& task : plan.tasks) {
      auto it = results.find(task.id());
      if (it == results.end())
        throw ValidationError("missing result for task " + task.id());
      map.blocks_[{task.subnet_a, task.subnet_b}] = it->second;
      if (plan.symmetric && task.subnet_a != task.subnet_b)
        map.blocks_[{task.subnet_b, task.subnet_a}] = it->second;
    }
    return map;
  }

  bool symmetric() const { return symmetric_; }
  const std::map<std::pair<int, int>, PLogPParams>& blocks() const {
    return blocks_;
  }

  int subnet_of(const NodeId& node) const {
    auto it = subnet_of_.find(node);
    if (it == subnet_of_.end())
      throw ValidationError("node '" + node + "' is not in the partition");
    return it->second;
  }

  // Parameters for a directed non-co-located pair. Pairs on the same node
  // are machine-level traffic, outside this model.
  const PLogPParams& params_for(const NodeId& src, const NodeId& dst) const {
    if (src == dst)
      throw ValidationError("pair '" + src +
                            "' -> itself is co-located, not a network link");
    auto it = blocks_.find({subnet_of(src), subnet_of(dst)});
    if (it == blocks_.end())
      throw ValidationError("no parameters for pair '" + src + "' -> '" + dst +
                            "'");
    return it->second;
  }

  bool operator==(const LinkParamMap&) const = default;

 private:
  bool symmetric_ = true;
  std::map<std::pair<int, int>, PLogPParams> blocks_;
  std::map<NodeId, int> subnet_of_;
};

// Spreads the per-task measurements over every directed node pair: pairs
// within subnet i get block (i,i); pairs across subnets (i,j) get the inter
// result, mirrored when symmetric.
inline LinkParamMap extrapolate(const MeasurementPlan& plan,
                                const std::map<std::string, PLogPParams>& results,
                                const Partition& partition) {
  return LinkParamMap::build(plan, results, partition);
}

// --- plan file format -----------------------------------------------------------
//
//   plan v1
//   symmetric <true|false>
//   task <intra:<i>|inter:<i>:<j>> <node_a> <node_b>

inline std::string serialize_plan(const MeasurementPlan& plan) {
  std::ostringstream out;
  out << "plan v1\n";
  out << "symmetric " << (plan.symmetric ? "true" : "false") << '\n';
  for (const MeasurementTask& task : plan.tasks)
    out << "task " << task.id() << ' ' << task.node_a << ' ' << task.node_b
        << '\n';
  return out.str();
}

namespace detail {

inline MeasurementTask parse_task_id(const std::string& id,
                                     const LineScanner& in) {
  MeasurementTask task;
  auto parse_index = [&](std::string_view field) {
    uint64_t v = 0;
    if (!try_parse_u64(field, v)) in.fail("bad task id '" + id + "'");
    return int(v);
  };
  if (id.rfind("intra:", 0) == 0) {
    task.kind = MeasurementTask::Kind::intra;
    task.subnet_a = task.subnet_b = parse_index(std::string_view(id).substr(6));
  } else if (id.rfind("inter:", 0) == 0) {
    std::string_view rest = std::string_view(id).substr(6);
    size_t colon = rest.find(':');
    if (colon == std::string_view::npos) in.fail("bad task id '" + id + "'");
    task.kind = MeasurementTask::Kind::inter;
    task.subnet_a = parse_index(rest.substr(0, colon));
    task.subnet_b = parse_index(rest.substr(colon + 1));
  } else {
    in.fail("bad task id '" + id + "'");
  }
  return task;
}

}  // namespace detail

inline MeasurementPlan parse_plan(std::string_view text,
                                  const std::string& source = "plan") {
  LineScanner in(text, source);
  in.expect_header("plan");
  MeasurementPlan plan;
  bool saw_symmetric = false;
  while (in.next()) {
    if (in.keyword() == "symmetric") {
      in.want(2);
      if (in.tok(1) == "true")
        plan.symmetric = true;
      else if (in.tok(1) == "false")
        plan.symmetric = false;
      else
        in.fail("symmetric must be true or false");
      saw_symmetric = true;
    } else if (in.keyword() == "task") {
      in.want(4);
      MeasurementTask task = detail::parse_task_id(in.tok(1), in);
      task.node_a = in.tok(2);
      task.node_b = in.tok(3);
      plan.tasks.push_back(std::move(task));
    } else {
      in.fail("unknown record '" + in.keyword() + "'");
    }
  }
  if (!saw_symmetric) throw ParseError(source + ": missing symmetric record");
  return plan;
}

// --- results / parameter block formats --------------------------------------------
//
//   results v1
//   result <task-id> latency <L> <ok|violation> gaps <k> {<size> <gap> <samples>}*k
//
//   params v1
//   symmetric <true|false>
//   block <i> <j> latency <L> <ok|violation> gaps <k> {<size> <gap> <samples>}*k
//
// The params file carries one record per directed (subnet, subnet) block.

struct TaskResult {
  std::string task_id;
  PLogPParams params;

  bool operator==(const TaskResult&) const = default;
};

namespace detail {

inline void write_params_fields(std::ostringstream& out,
                                const PLogPParams& params) {
  out << "latency " << format_double(params.latency_us) << ' '
      << (params.model_violation ? "violation" : "ok");
  out << " gaps " << params.gap_us_by_size.size();
  for (const auto& [size, gap] : params.gap_us_by_size) {
    auto s = params.samples.find(size);
    out << ' ' << size << ' ' << format_double(gap) << ' '
        << (s == params.samples.end() ? 0 : s->second);
  }
}

// Reads the "latency ... gaps ..." tail shared by result and block records,
// starting at token `i`.
inline PLogPParams read_params_fields(const LineScanner& in, size_t i) {
  PLogPParams params;
  if (in.tok(i) != "latency") in.fail("expected 'latency'");
  params.latency_us = in.num(i + 1);
  const std::string& flag = in.tok(i + 2);
  if (flag == "violation")
    params.model_violation = true;
  else if (flag != "ok")
    in.fail("expected 'ok' or 'violation'");
  if (in.tok(i + 3) != "gaps") in.fail("expected 'gaps'");
  uint64_t count = in.uint(i + 4);
  in.want(i + 5 + count * 3);
  for (uint64_t k = 0; k < count; ++k) {
    uint64_t size = in.uint(i + 5 + k * 3);
    params.gap_us_by_size[size] = in.num(i + 6 + k * 3);
    params.samples[size] = int(in.integer(i + 7 + k * 3));
  }
  return params;
}

}  // namespace detail

inline std::string serialize_results(const std::vector<TaskResult>& results) {
  std::ostringstream out;
  out << "results v1\n";
  for (const TaskResult& r : results) {
    out << "result " << r.task_id << ' ';
    detail::write_params_fields(out, r.params);
    out << '\n';
  }
  return out.str();
}

inline std::vector<TaskResult> parse_results(
    std::string_view text, const std::string& source = "results") {
  LineScanner in(text, source);
  in.expect_header("results");
  std::vector<TaskResult> results;
  while (in.next()) {
    if (in.keyword() != "result")
      in.fail("unknown record '" + in.keyword() + "'");
    in.want_at_least(7);
    results.push_back({in.tok(1), detail::read_params_fields(in, 2)});
  }
  return results;
}

inline std::map<std::string, PLogPParams> results_by_task(
    const std::vector<TaskResult>& results) {
  std::map<std::string, PLogPParams> map;
  for (const TaskResult& r : results) map[r.task_id] = r.params;
  return map;
}

inline std::string serialize_link_params(const LinkParamMap& map) {
  std::ostringstream out;
  out << "params v1\n";
  out << "symmetric " << (map.symmetric() ? "true" : "false") << '\n';
  for (const auto& [pair, params] : map.blocks()) {
    out << "block " << pair.first << ' ' << pair.second << ' ';
    detail::write_params_fields(out, params);
    out << '\n';
  }
  return out.str();
}

}  // namespace topodisc
