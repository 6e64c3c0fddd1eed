#pragma once

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "text.hpp"

namespace topodisc {

// Opaque node identifier (hostname or hostname:port). Compared by exact byte
// equality everywhere; never interpreted.
using NodeId = std::string;

inline constexpr double kInfEdge = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultTolerance = 1.20;

inline void validate_node_id(const NodeId& id) {
  if (id.empty()) throw ValidationError("node id must be non-empty");
  for (unsigned char c : id)
    if (std::isspace(c))
      throw ValidationError("node id '" + id + "' contains whitespace");
}

// One directed link measurement. Throughput is carried through for consumers
// but not used as a clustering cost.
struct LinkMetric {
  double latency_us = 0.0;
  std::optional<double> throughput_bps;

  bool operator==(const LinkMetric&) const = default;
};

// Sparse, possibly asymmetric map of directed link metrics. An absent entry
// means "never probed" (the node pair lives in different monitoring
// domains), never zero. Nodes are kept sorted by id.
class DistanceMatrix {
 public:
  void add_node(const NodeId& id, const std::string& domain = "") {
    validate_node_id(id);
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
    if (it != nodes_.end() && *it == id)
      throw ValidationError("duplicate node '" + id + "'");
    nodes_.insert(it, id);
    if (!domain.empty()) domains_[id] = domain;
  }

  void add_entry(const NodeId& src, const NodeId& dst, LinkMetric metric) {
    if (src == dst) throw ValidationError("self-entry '" + src + "'");
    if (!has_node(src))
      throw ValidationError("entry references unknown node '" + src + "'");
    if (!has_node(dst))
      throw ValidationError("entry references unknown node '" + dst + "'");
    if (!(metric.latency_us > 0))
      throw ValidationError("non-positive latency for entry '" + src + "' -> '" +
                            dst + "'");
    if (metric.throughput_bps && !(*metric.throughput_bps > 0))
      throw ValidationError("non-positive throughput for entry '" + src +
                            "' -> '" + dst + "'");
    auto [it, inserted] = entries_.emplace(std::make_pair(src, dst), metric);
    if (!inserted)
      throw ValidationError("duplicate entry '" + src + "' -> '" + dst + "'");
  }

  void add_meta(std::string line) { meta_.push_back(std::move(line)); }

  bool has_node(const NodeId& id) const {
    return std::binary_search(nodes_.begin(), nodes_.end(), id);
  }

  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::map<NodeId, std::string>& domain_tags() const { return domains_; }
  const std::map<std::pair<NodeId, NodeId>, LinkMetric>& entries() const {
    return entries_;
  }
  const std::vector<std::string>& meta() const { return meta_; }

  // nullptr means the directed pair was never measured.
  const LinkMetric* entry(const NodeId& src, const NodeId& dst) const {
    auto it = entries_.find(std::make_pair(src, dst));
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool operator==(const DistanceMatrix&) const = default;

 private:
  std::vector<NodeId> nodes_;  // sorted, unique
  std::map<NodeId, std::string> domains_;
  std::map<std::pair<NodeId, NodeId>, LinkMetric> entries_;
  std::vector<std::string> meta_;
};

// Undirected clustering edge; endpoints kept in lexicographic order.
struct UndirectedEdge {
  NodeId a;
  NodeId b;
  double weight_us = 0.0;

  bool operator==(const UndirectedEdge&) const = default;
};

// Collapses the directed matrix into undirected clustering costs: one edge
// per unordered pair with at least one measured direction, weighted by the
// mean of the available directed latencies.
inline std::vector<UndirectedEdge> symmetrize(const DistanceMatrix& matrix) {
  std::map<std::pair<NodeId, NodeId>, std::pair<double, int>> acc;
  for (const auto& [pair, metric] : matrix.entries()) {
    auto key = pair.first < pair.second
                   ? pair
                   : std::make_pair(pair.second, pair.first);
    auto& slot = acc[key];
    slot.first += metric.latency_us;
    slot.second += 1;
  }
  std::vector<UndirectedEdge> edges;
  edges.reserve(acc.size());
  for (const auto& [key, slot] : acc)
    edges.push_back({key.first, key.second, slot.first / slot.second});
  return edges;
}

// One discovered logical cluster. min_edge is the cheapest edge accepted
// while the subnet was merged together; singletons carry the +inf sentinel.
struct Subnet {
  std::vector<NodeId> members;  // sorted, non-empty
  double min_edge = kInfEdge;

  bool operator==(const Subnet&) const = default;
};

// Disjoint covering of the node set, ordered by each subnet's
// lexicographically smallest member.
struct Partition {
  std::vector<Subnet> subnets;
  double tolerance = kDefaultTolerance;

  bool operator==(const Partition&) const = default;
};

// Structural invariants: disjoint subnets covering exactly `nodes`, sorted
// member lists, deterministic subnet order.
inline void validate_partition(const Partition& partition,
                               const std::vector<NodeId>& nodes) {
  std::vector<NodeId> seen;
  for (const Subnet& s : partition.subnets) {
    if (s.members.empty()) throw ValidationError("empty subnet");
    if (!std::is_sorted(s.members.begin(), s.members.end()))
      throw ValidationError("subnet members not sorted");
    if (!(s.min_edge > 0))
      throw ValidationError("subnet min_edge must be positive");
    if (s.members.size() == 1 && s.min_edge != kInfEdge)
      throw ValidationError("singleton subnet must carry the inf sentinel");
    seen.insert(seen.end(), s.members.begin(), s.members.end());
  }
  for (size_t i = 1; i < partition.subnets.size(); ++i)
    if (!(partition.subnets[i - 1].members.front() <
          partition.subnets[i].members.front()))
      throw ValidationError("subnets not ordered by smallest member");
  std::sort(seen.begin(), seen.end());
  std::vector<NodeId> expected(nodes);
  std::sort(expected.begin(), expected.end());
  if (seen != expected)
    throw ValidationError("subnets do not partition the node set");
}

// --- distance matrix file format -------------------------------------------
//
//   matrix v1
//   node <id> [<domain>]
//   entry <src> <dst> <latency_us> [<throughput_bps>]
//   meta <free-form provenance text>
//
// Nodes are declared before the entries that reference them. Serialization is
// byte-deterministic: nodes sorted by id, entries sorted by (src, dst).

inline std::string serialize_distance_matrix(const DistanceMatrix& matrix) {
  std::ostringstream out;
  out << "matrix v1\n";
  for (const NodeId& id : matrix.nodes()) {
    out << "node " << id;
    auto it = matrix.domain_tags().find(id);
    if (it != matrix.domain_tags().end()) out << ' ' << it->second;
    out << '\n';
  }
  for (const auto& [pair, metric] : matrix.entries()) {
    out << "entry " << pair.first << ' ' << pair.second << ' '
        << format_double(metric.latency_us);
    if (metric.throughput_bps) out << ' ' << format_double(*metric.throughput_bps);
    out << '\n';
  }
  for (const std::string& m : matrix.meta()) out << "meta " << m << '\n';
  return out.str();
}

inline DistanceMatrix parse_distance_matrix(std::string_view text,
                                            const std::string& source = "matrix") {
  LineScanner in(text, source);
  in.expect_header("matrix");
  DistanceMatrix matrix;
  auto rethrow = [&](const ValidationError& e) {
    throw ValidationError(source + ":" + std::to_string(in.line_no()) + ": " +
                          e.what());
  };
  while (in.next()) {
    if (in.keyword() == "node") {
      if (in.size() != 2 && in.size() != 3)
        in.fail("expected 'node <id> [<domain>]'");
      try {
        matrix.add_node(in.tok(1), in.size() == 3 ? in.tok(2) : "");
      } catch (const ValidationError& e) {
        rethrow(e);
      }
    } else if (in.keyword() == "entry") {
      if (in.size() != 4 && in.size() != 5)
        in.fail("expected 'entry <src> <dst> <latency_us> [<throughput_bps>]'");
      LinkMetric metric;
      metric.latency_us = in.num(3);
      if (in.size() == 5) metric.throughput_bps = in.num(4);
      try {
        matrix.add_entry(in.tok(1), in.tok(2), metric);
      } catch (const ValidationError& e) {
        rethrow(e);
      }
    } else if (in.keyword() == "meta") {
      matrix.add_meta(in.rest(1));
    } else {
      in.fail("unknown record '" + in.keyword() + "'");
    }
  }
  return matrix;
}

// --- partition file format --------------------------------------------------
//
//   partition v1
//   tolerance <factor>
//   subnet <index> <min_edge|inf> <member> [<member> ...]
//
// Subnet indices are positional (0-based) and members are sorted.

inline std::string serialize_partition(const Partition& partition) {
  std::ostringstream out;
  out << "partition v1\n";
  out << "tolerance " << format_double(partition.tolerance) << '\n';
  for (size_t i = 0; i < partition.subnets.size(); ++i) {
    const Subnet& s = partition.subnets[i];
    out << "subnet " << i << ' ' << format_double(s.min_edge);
    for (const NodeId& m : s.members) out << ' ' << m;
    out << '\n';
  }
  return out.str();
}

inline Partition parse_partition(std::string_view text,
                                 const std::string& source = "partition") {
  LineScanner in(text, source);
  in.expect_header("partition");
  Partition partition;
  bool saw_tolerance = false;
  while (in.next()) {
    if (in.keyword() == "tolerance") {
      in.want(2);
      partition.tolerance = in.num(1);
      saw_tolerance = true;
    } else if (in.keyword() == "subnet") {
      in.want_at_least(4);
      if (in.uint(1) != partition.subnets.size())
        in.fail("subnet index out of order");
      Subnet s;
      s.min_edge = in.num(2);
      for (size_t i = 3; i < in.size(); ++i) s.members.push_back(in.tok(i));
      if (!std::is_sorted(s.members.begin(), s.members.end()))
        in.fail("subnet members not sorted");
      partition.subnets.push_back(std::move(s));
    } else {
      in.fail("unknown record '" + in.keyword() + "'");
    }
  }
  if (!saw_tolerance) throw ParseError(source + ": missing tolerance record");
  return partition;
}

}  // namespace topodisc
