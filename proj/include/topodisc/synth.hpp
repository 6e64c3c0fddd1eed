#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "text.hpp"

namespace topodisc {

// Synthetic scenario with planted cluster structure: a list of node groups
// with an intra-group latency each, plus one latency per group pair.
struct GroupSpec {
  std::string label;
  int size = 0;
  double intra_latency_us = 0.0;
};

struct ScenarioSpec {
  std::vector<GroupSpec> groups;
  // Keyed by lexicographically ordered label pair.
  std::map<std::pair<std::string, std::string>, double> inter_latency_us;
  double jitter_fraction = 0.0;  // multiplicative, bounded at 5%
  uint64_t seed = 0;
};

inline void validate_scenario(const ScenarioSpec& spec) {
  if (spec.groups.empty()) throw ValidationError("scenario has no groups");
  std::set<std::string> labels;
  for (const GroupSpec& g : spec.groups) {
    validate_node_id(g.label);
    if (!labels.insert(g.label).second)
      throw ValidationError("duplicate group label '" + g.label + "'");
    if (g.size < 1) throw ValidationError("group '" + g.label + "' is empty");
    if (!(g.intra_latency_us > 0))
      throw ValidationError("non-positive intra latency for group '" + g.label +
                            "'");
  }
  for (const auto& [pair, latency] : spec.inter_latency_us) {
    if (!labels.count(pair.first) || !labels.count(pair.second))
      throw ValidationError("inter latency names unknown group '" + pair.first +
                            "," + pair.second + "'");
    if (!(latency > 0))
      throw ValidationError("non-positive inter latency for '" + pair.first +
                            "," + pair.second + "'");
  }
  if (spec.jitter_fraction < 0 || spec.jitter_fraction > 0.05)
    throw ValidationError("jitter fraction must be in [0, 0.05]");
}

struct SynthResult {
  DistanceMatrix matrix;
  Partition ground_truth;
};

namespace detail {

// splitmix64; keeps generated matrices identical across platforms instead of
// leaning on distribution internals.
class JitterSource {
 public:
  explicit JitterSource(uint64_t seed) : state_(seed) {}

  // Uniform in [-1, 1).
  double next_unit() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    return double(z >> 11) * (2.0 / 9007199254740992.0) - 1.0;
  }

 private:
  uint64_t state_;
};

inline std::string synth_node_name(const std::string& label, int i) {
  std::string name = label + (i < 10 ? "0" : "") + std::to_string(i);
  return name;
}

}  // namespace detail

// Expands the scenario into a full symmetric distance matrix (both directed
// entries per pair, equal values) plus the planted partition. Deterministic
// for a given (spec, seed).
inline SynthResult generate(const ScenarioSpec& spec) {
  validate_scenario(spec);

  std::vector<NodeId> node_ids;
  std::map<NodeId, const GroupSpec*> group_of;
  for (const GroupSpec& g : spec.groups) {
    for (int i = 0; i < g.size; ++i) {
      NodeId id = detail::synth_node_name(g.label, i);
      if (group_of.count(id))
        throw ValidationError("generated node id collision '" + id + "'");
      node_ids.push_back(id);
      group_of.emplace(std::move(id), &g);
    }
  }
  std::sort(node_ids.begin(), node_ids.end());

  DistanceMatrix matrix;
  for (const NodeId& id : node_ids)
    matrix.add_node(id, group_of.at(id)->label);

  detail::JitterSource jitter(spec.seed);
  std::map<std::string, Subnet> truth;
  for (const GroupSpec& g : spec.groups) truth[g.label] = Subnet{};

  for (size_t i = 0; i < node_ids.size(); ++i) {
    for (size_t j = i + 1; j < node_ids.size(); ++j) {
      const GroupSpec* ga = group_of.at(node_ids[i]);
      const GroupSpec* gb = group_of.at(node_ids[j]);
      double base;
      if (ga == gb) {
        base = ga->intra_latency_us;
      } else {
        auto key = ga->label < gb->label
                       ? std::make_pair(ga->label, gb->label)
                       : std::make_pair(gb->label, ga->label);
        auto it = spec.inter_latency_us.find(key);
        if (it == spec.inter_latency_us.end())
          throw ValidationError("no inter latency for group pair '" +
                                key.first + "," + key.second + "'");
        base = it->second;
      }
      double latency =
          base * (1.0 + spec.jitter_fraction * jitter.next_unit());
      LinkMetric metric{latency, std::nullopt};
      matrix.add_entry(node_ids[i], node_ids[j], metric);
      matrix.add_entry(node_ids[j], node_ids[i], metric);
      if (ga == gb) {
        Subnet& s = truth[ga->label];
        s.min_edge = std::min(s.min_edge, latency);
      }
    }
  }

  Partition ground_truth;
  ground_truth.tolerance = kDefaultTolerance;
  for (const NodeId& id : node_ids)
    truth[group_of.at(id)->label].members.push_back(id);
  for (auto& [label, subnet] : truth)
    ground_truth.subnets.push_back(std::move(subnet));
  std::sort(ground_truth.subnets.begin(), ground_truth.subnets.end(),
            [](const Subnet& x, const Subnet& y) {
              return x.members.front() < y.members.front();
            });
  validate_partition(ground_truth, node_ids);
  return {std::move(matrix), std::move(ground_truth)};
}

// 20 machines in six groups, A..F. Two latency classes of network cards (A
// and D fast, the rest slower on-board ones) and inter-group links where
// every C-* and E-* connection runs two to three times slower than the other
// inter-group links. All values are planted constants chosen so the groups
// separate unambiguously at the default tolerance.
inline ScenarioSpec idpot_preset() {
  ScenarioSpec spec;
  spec.groups = {
      {"A", 4, 45.0}, {"B", 4, 58.0}, {"C", 3, 60.0},
      {"D", 4, 48.0}, {"E", 2, 62.0}, {"F", 3, 56.0},
  };
  auto link = [&](const char* x, const char* y, double v) {
    spec.inter_latency_us[{std::string(x), std::string(y)}] = v;
  };
  link("A", "B", 130.0);
  link("A", "C", 265.0);
  link("A", "D", 125.0);
  link("A", "E", 280.0);
  link("A", "F", 135.0);
  link("B", "C", 270.0);
  link("B", "D", 130.0);
  link("B", "E", 285.0);
  link("B", "F", 128.0);
  link("C", "D", 260.0);
  link("C", "E", 380.0);
  link("C", "F", 275.0);
  link("D", "E", 275.0);
  link("D", "F", 132.0);
  link("E", "F", 290.0);
  spec.jitter_fraction = 0.02;
  spec.seed = 1;
  return spec;
}

// --- scenario file format -----------------------------------------------------
//
//   scenario v1
//   seed <u64>
//   jitter <fraction>
//   group <label> <size> <intra_latency_us>
//   inter <label> <label> <latency_us>

inline std::string serialize_scenario(const ScenarioSpec& spec) {
  std::ostringstream out;
  out << "scenario v1\n";
  out << "seed " << spec.seed << '\n';
  out << "jitter " << format_double(spec.jitter_fraction) << '\n';
  for (const GroupSpec& g : spec.groups)
    out << "group " << g.label << ' ' << g.size << ' '
        << format_double(g.intra_latency_us) << '\n';
  for (const auto& [pair, latency] : spec.inter_latency_us)
    out << "inter " << pair.first << ' ' << pair.second << ' '
        << format_double(latency) << '\n';
  return out.str();
}

inline ScenarioSpec parse_scenario(std::string_view text,
                                   const std::string& source = "scenario") {
  LineScanner in(text, source);
  in.expect_header("scenario");
  ScenarioSpec spec;
  while (in.next()) {
    if (in.keyword() == "seed") {
      in.want(2);
      spec.seed = in.uint(1);
    } else if (in.keyword() == "jitter") {
      in.want(2);
      spec.jitter_fraction = in.num(1);
    } else if (in.keyword() == "group") {
      in.want(4);
      spec.groups.push_back(
          {in.tok(1), static_cast<int>(in.integer(2)), in.num(3)});
    } else if (in.keyword() == "inter") {
      in.want(4);
      auto key = in.tok(1) < in.tok(2) ? std::make_pair(in.tok(1), in.tok(2))
                                       : std::make_pair(in.tok(2), in.tok(1));
      spec.inter_latency_us[key] = in.num(3);
    } else {
      in.fail("unknown record '" + in.keyword() + "'");
    }
  }
  validate_scenario(spec);
  return spec;
}

}  // namespace topodisc
