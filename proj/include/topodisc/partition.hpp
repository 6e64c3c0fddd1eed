#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "text.hpp"

namespace topodisc {

// Greedy threshold clustering over a sorted undirected edge list. An edge is
// accepted only while it stays within `tolerance` times both endpoints'
// cheapest incident edge and both endpoints' current subnet minimum; accepted
// edges merge subnets. The skip comparisons are strict: a weight exactly at
// the bound is accepted.
struct PartitionConfig {
  double tolerance = kDefaultTolerance;
  // Tie-break is fixed: edges sort by (weight, smaller endpoint id, larger
  // endpoint id), which makes the scan deterministic under duplicate weights.
};

enum class EdgeOutcome {
  accepted,
  skipped_same_subnet,
  skipped_node_min_edge,
  skipped_subnet_min_edge,
};

inline const char* to_string(EdgeOutcome o) {
  switch (o) {
    case EdgeOutcome::accepted: return "accept";
    case EdgeOutcome::skipped_same_subnet: return "same-subnet";
    case EdgeOutcome::skipped_node_min_edge: return "node-min-edge";
    case EdgeOutcome::skipped_subnet_min_edge: return "subnet-min-edge";
  }
  return "?";
}

struct EdgeDecision {
  NodeId a;  // lexicographically smaller endpoint
  NodeId b;
  double weight = 0.0;
  EdgeOutcome outcome = EdgeOutcome::accepted;

  bool accepted() const { return outcome == EdgeOutcome::accepted; }
  bool operator==(const EdgeDecision&) const = default;
};

// Ordered record of every edge decision, sufficient to replay the run.
struct MergeTrace {
  double tolerance = kDefaultTolerance;
  std::vector<EdgeDecision> decisions;

  bool operator==(const MergeTrace&) const = default;
};

namespace detail {

// Union-find with union by size; the merged subnet's cheapest accepted edge
// lives at the representative.
class SubnetForest {
 public:
  explicit SubnetForest(size_t n)
      : parent_(n), size_(n, 1), min_edge_(n, kInfEdge) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Both arguments must be roots; returns the surviving root.
  int unite(int ra, int rb, double merged_min_edge) {
    if (size_[ra] < size_[rb]) std::swap(ra, rb);
    parent_[rb] = ra;
    size_[ra] += size_[rb];
    min_edge_[ra] = merged_min_edge;
    return ra;
  }

  double subnet_min_edge(int root) const { return min_edge_[root]; }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
  std::vector<double> min_edge_;
};

struct IndexedEdge {
  double weight;
  int a;  // index of the smaller endpoint id
  int b;
};

}  // namespace detail

struct PartitionRun {
  Partition partition;
  MergeTrace trace;
};

inline PartitionRun partition_with_trace(const std::vector<UndirectedEdge>& edges,
                                         const std::vector<NodeId>& nodes,
                                         const PartitionConfig& config = {}) {
  if (!(config.tolerance >= 1.0))
    throw ValidationError("tolerance must be >= 1");

  std::vector<NodeId> ids(nodes);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ValidationError("duplicate node in node set");
  std::map<NodeId, int> index;
  for (size_t i = 0; i < ids.size(); ++i) {
    validate_node_id(ids[i]);
    index.emplace(ids[i], static_cast<int>(i));
  }

  std::vector<detail::IndexedEdge> work;
  work.reserve(edges.size());
  for (const UndirectedEdge& e : edges) {
    auto ia = index.find(e.a);
    auto ib = index.find(e.b);
    if (ia == index.end())
      throw ValidationError("edge references unknown node '" + e.a + "'");
    if (ib == index.end())
      throw ValidationError("edge references unknown node '" + e.b + "'");
    if (e.a == e.b)
      throw ValidationError("edge with identical endpoints '" + e.a + "'");
    if (!(e.weight_us > 0))
      throw ValidationError("non-positive edge weight for '" + e.a + "' -- '" +
                            e.b + "'");
    int a = ia->second, b = ib->second;
    if (ids[b] < ids[a]) std::swap(a, b);
    work.push_back({e.weight_us, a, b});
  }
  std::sort(work.begin(), work.end(), [&](const auto& x, const auto& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    if (ids[x.a] != ids[y.a]) return ids[x.a] < ids[y.a];
    return ids[x.b] < ids[y.b];
  });

  // Cheapest incident edge per node, fixed before the scan. Isolated nodes
  // keep +inf and end as singletons.
  std::vector<double> node_min_edge(ids.size(), kInfEdge);
  for (const auto& e : work) {
    node_min_edge[e.a] = std::min(node_min_edge[e.a], e.weight);
    node_min_edge[e.b] = std::min(node_min_edge[e.b], e.weight);
  }

  detail::SubnetForest forest(ids.size());
  MergeTrace trace;
  trace.tolerance = config.tolerance;
  trace.decisions.reserve(work.size());
  const double tol = config.tolerance;

  for (const auto& e : work) {
    EdgeDecision d{ids[e.a], ids[e.b], e.weight, EdgeOutcome::accepted};
    int ra = forest.find(e.a);
    int rb = forest.find(e.b);
    if (ra == rb) {
      d.outcome = EdgeOutcome::skipped_same_subnet;
    } else if (e.weight > tol * node_min_edge[e.a] ||
               e.weight > tol * node_min_edge[e.b]) {
      d.outcome = EdgeOutcome::skipped_node_min_edge;
    } else if (e.weight > tol * forest.subnet_min_edge(ra) ||
               e.weight > tol * forest.subnet_min_edge(rb)) {
      // A node not yet merged into any subnet keeps the +inf sentinel, so
      // this bound can only fire for endpoints that are already grouped.
      d.outcome = EdgeOutcome::skipped_subnet_min_edge;
    } else {
      double merged = std::min({e.weight, forest.subnet_min_edge(ra),
                                forest.subnet_min_edge(rb)});
      forest.unite(ra, rb, merged);
    }
    trace.decisions.push_back(std::move(d));
  }

  std::map<int, Subnet> groups;
  for (size_t i = 0; i < ids.size(); ++i) {
    int root = forest.find(static_cast<int>(i));
    Subnet& s = groups[root];
    s.members.push_back(ids[i]);
    s.min_edge = forest.subnet_min_edge(root);
  }
  Partition partition;
  partition.tolerance = config.tolerance;
  for (auto& [root, subnet] : groups) {
    std::sort(subnet.members.begin(), subnet.members.end());
    partition.subnets.push_back(std::move(subnet));
  }
  std::sort(partition.subnets.begin(), partition.subnets.end(),
            [](const Subnet& x, const Subnet& y) {
              return x.members.front() < y.members.front();
            });
  validate_partition(partition, ids);
  return {std::move(partition), std::move(trace)};
}

inline Partition partition(const std::vector<UndirectedEdge>& edges,
                           const std::vector<NodeId>& nodes,
                           const PartitionConfig& config = {}) {
  return partition_with_trace(edges, nodes, config).partition;
}

inline MergeTrace explain(const std::vector<UndirectedEdge>& edges,
                          const std::vector<NodeId>& nodes,
                          const PartitionConfig& config = {}) {
  return partition_with_trace(edges, nodes, config).trace;
}

// --- merge trace file format -------------------------------------------------
//
//   trace v1
//   tolerance <factor>
//   edge <a> <b> <weight> accept
//   edge <a> <b> <weight> skip <same-subnet|node-min-edge|subnet-min-edge>

inline std::string serialize_trace(const MergeTrace& trace) {
  std::ostringstream out;
  out << "trace v1\n";
  out << "tolerance " << format_double(trace.tolerance) << '\n';
  for (const EdgeDecision& d : trace.decisions) {
    out << "edge " << d.a << ' ' << d.b << ' ' << format_double(d.weight);
    if (d.accepted())
      out << " accept\n";
    else
      out << " skip " << to_string(d.outcome) << '\n';
  }
  return out.str();
}

inline MergeTrace parse_trace(std::string_view text,
                              const std::string& source = "trace") {
  LineScanner in(text, source);
  in.expect_header("trace");
  MergeTrace trace;
  bool saw_tolerance = false;
  while (in.next()) {
    if (in.keyword() == "tolerance") {
      in.want(2);
      trace.tolerance = in.num(1);
      saw_tolerance = true;
    } else if (in.keyword() == "edge") {
      in.want_at_least(5);
      EdgeDecision d;
      d.a = in.tok(1);
      d.b = in.tok(2);
      d.weight = in.num(3);
      if (in.tok(4) == "accept") {
        in.want(5);
        d.outcome = EdgeOutcome::accepted;
      } else if (in.tok(4) == "skip") {
        in.want(6);
        const std::string& reason = in.tok(5);
        if (reason == "same-subnet")
          d.outcome = EdgeOutcome::skipped_same_subnet;
        else if (reason == "node-min-edge")
          d.outcome = EdgeOutcome::skipped_node_min_edge;
        else if (reason == "subnet-min-edge")
          d.outcome = EdgeOutcome::skipped_subnet_min_edge;
        else
          in.fail("unknown skip reason '" + reason + "'");
      } else {
        in.fail("expected 'accept' or 'skip'");
      }
      trace.decisions.push_back(std::move(d));
    } else {
      in.fail("unknown record '" + in.keyword() + "'");
    }
  }
  if (!saw_tolerance) throw ParseError(source + ": missing tolerance record");
  return trace;
}

}  // namespace topodisc
