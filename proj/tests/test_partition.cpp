#include <catch2/catch.hpp>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <topodisc/partition.hpp>

using namespace topodisc;

namespace {

std::vector<UndirectedEdge> two_pair_edges() {
  return {
      {"a", "b", 1.0},  {"c", "d", 1.0},  {"a", "c", 10.0},
      {"a", "d", 10.0}, {"b", "c", 10.0}, {"b", "d", 10.0},
  };
}

std::vector<UndirectedEdge> chain_edges() {
  return {{"a", "b", 1.0}, {"b", "c", 1.1}, {"a", "c", 1.15}};
}

std::vector<std::vector<NodeId>> member_sets(const Partition& p) {
  std::vector<std::vector<NodeId>> out;
  for (const Subnet& s : p.subnets) out.push_back(s.members);
  return out;
}

// Independent replay of a merge trace: recomputes every threshold condition
// from scratch state and re-applies accepted merges. Used as the oracle that
// the production scan is sound.
struct ReplayResult {
  std::vector<std::set<NodeId>> groups;
  bool ok = true;
  std::string why;
};

ReplayResult replay_trace(const MergeTrace& trace,
                          const std::vector<UndirectedEdge>& edges,
                          const std::vector<NodeId>& nodes) {
  ReplayResult r;
  auto fail = [&](const std::string& why) {
    r.ok = false;
    r.why = why;
    return r;
  };

  // Node minima computed independently of the implementation.
  std::map<NodeId, double> min_edge;
  for (const NodeId& n : nodes) min_edge[n] = kInfEdge;
  for (const auto& e : edges) {
    min_edge[e.a] = std::min(min_edge[e.a], e.weight_us);
    min_edge[e.b] = std::min(min_edge[e.b], e.weight_us);
  }

  // The trace must enumerate exactly the canonicalized edges sorted by the
  // documented tie-break.
  std::vector<UndirectedEdge> expect(edges);
  for (auto& e : expect)
    if (e.b < e.a) std::swap(e.a, e.b);
  std::sort(expect.begin(), expect.end(), [](const auto& x, const auto& y) {
    return std::tie(x.weight_us, x.a, x.b) < std::tie(y.weight_us, y.a, y.b);
  });
  if (trace.decisions.size() != expect.size())
    return fail("trace length mismatch");

  std::map<NodeId, int> group_of;  // -1 when not yet merged anywhere
  std::map<int, double> group_min;
  std::map<int, std::set<NodeId>> members;
  for (const NodeId& n : nodes) group_of[n] = -1;
  int next_group = 0;
  const double tol = trace.tolerance;

  for (size_t i = 0; i < expect.size(); ++i) {
    const EdgeDecision& d = trace.decisions[i];
    const UndirectedEdge& e = expect[i];
    if (d.a != e.a || d.b != e.b || d.weight != e.weight_us)
      return fail("trace order mismatch at decision " + std::to_string(i));

    int ga = group_of[d.a], gb = group_of[d.b];
    EdgeOutcome want;
    if (ga != -1 && ga == gb) {
      want = EdgeOutcome::skipped_same_subnet;
    } else if (d.weight > tol * min_edge[d.a] ||
               d.weight > tol * min_edge[d.b]) {
      want = EdgeOutcome::skipped_node_min_edge;
    } else if ((ga != -1 && d.weight > tol * group_min[ga]) ||
               (gb != -1 && d.weight > tol * group_min[gb])) {
      want = EdgeOutcome::skipped_subnet_min_edge;
    } else {
      want = EdgeOutcome::accepted;
    }
    if (want != d.outcome)
      return fail("outcome mismatch at decision " + std::to_string(i));

    if (want == EdgeOutcome::accepted) {
      double merged = d.weight;
      if (ga != -1) merged = std::min(merged, group_min[ga]);
      if (gb != -1) merged = std::min(merged, group_min[gb]);
      int g = next_group++;
      std::set<NodeId> joined{d.a, d.b};
      if (ga != -1) joined.insert(members[ga].begin(), members[ga].end());
      if (gb != -1) joined.insert(members[gb].begin(), members[gb].end());
      for (const NodeId& n : joined) group_of[n] = g;
      if (ga != -1) members.erase(ga);
      if (gb != -1) members.erase(gb);
      members[g] = std::move(joined);
      group_min[g] = merged;
    }
  }

  for (const auto& [n, g] : group_of)
    if (g == -1) r.groups.push_back({n});
  for (const auto& [g, m] : members) r.groups.push_back(m);
  std::sort(r.groups.begin(), r.groups.end());
  return r;
}

std::vector<std::set<NodeId>> as_sets(const Partition& p) {
  std::vector<std::set<NodeId>> out;
  for (const Subnet& s : p.subnets)
    out.emplace_back(s.members.begin(), s.members.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("two cheap pairs separate from expensive cross links") {
  std::vector<NodeId> nodes{"a", "b", "c", "d"};
  auto run = partition_with_trace(two_pair_edges(), nodes, {1.20});

  CHECK(member_sets(run.partition) ==
        std::vector<std::vector<NodeId>>{{"a", "b"}, {"c", "d"}});
  CHECK(run.partition.subnets[0].min_edge == 1.0);
  CHECK(run.partition.subnets[1].min_edge == 1.0);

  REQUIRE(run.trace.decisions.size() == 6);
  CHECK(run.trace.decisions[0].accepted());
  CHECK(run.trace.decisions[1].accepted());
  for (size_t i = 2; i < 6; ++i)
    CHECK(run.trace.decisions[i].outcome == EdgeOutcome::skipped_node_min_edge);
}

TEST_CASE("three-node chain merges into one subnet") {
  std::vector<NodeId> nodes{"a", "b", "c"};
  auto run = partition_with_trace(chain_edges(), nodes, {1.20});

  REQUIRE(run.partition.subnets.size() == 1);
  CHECK(run.partition.subnets[0].members == std::vector<NodeId>{"a", "b", "c"});
  CHECK(run.partition.subnets[0].min_edge == 1.0);

  REQUIRE(run.trace.decisions.size() == 3);
  CHECK(run.trace.decisions[0].accepted());
  CHECK(run.trace.decisions[1].accepted());
  CHECK(run.trace.decisions[2].outcome == EdgeOutcome::skipped_same_subnet);
}

TEST_CASE("no edges means all singletons") {
  std::vector<NodeId> nodes{"x", "y", "z"};
  Partition p = partition({}, nodes, {1.20});
  REQUIRE(p.subnets.size() == 3);
  for (const Subnet& s : p.subnets) {
    CHECK(s.members.size() == 1);
    CHECK(s.min_edge == kInfEdge);
  }
  CHECK(explain({}, nodes, {1.20}).decisions.empty());
}

TEST_CASE("edge naming an unknown node is rejected") {
  CHECK_THROWS_WITH(partition({{"a", "q", 1.0}}, {"a", "b"}, {1.20}),
                    Catch::Contains("unknown node 'q'"));
  CHECK_THROWS_AS(partition({}, {"a"}, {0.8}), ValidationError);
}

TEST_CASE("weight exactly at the bound is accepted") {
  // The skip condition is strictly greater-than, as printed.
  std::vector<NodeId> nodes{"a", "b", "c"};
  std::vector<UndirectedEdge> edges{{"a", "b", 1.0}, {"b", "c", 1.2}};
  Partition p = partition(edges, nodes, {1.20});
  REQUIRE(p.subnets.size() == 1);

  edges[1].weight_us = std::nextafter(1.2, 2.0);
  p = partition(edges, nodes, {1.20});
  CHECK(p.subnets.size() == 2);
}

TEST_CASE("subnet min edge bound can reject an edge both node bounds allow") {
  // c joins {a,b} through the 0.9 edge, so its own minimum stays 0.9 and the
  // 1.05 edge passes both node bounds (1.05 <= 1.2*0.9). The subnet was
  // formed at 0.8 though, and 1.05 > 1.2*0.8 hits the subnet bound.
  std::vector<NodeId> nodes{"a", "b", "c", "d"};
  std::vector<UndirectedEdge> edges{
      {"a", "b", 0.8}, {"a", "c", 0.9}, {"c", "d", 1.05}};
  auto run = partition_with_trace(edges, nodes, {1.20});
  CHECK(as_sets(run.partition) ==
        std::vector<std::set<NodeId>>{{"a", "b", "c"}, {"d"}});
  REQUIRE(run.trace.decisions.size() == 3);
  CHECK(run.trace.decisions[2].outcome ==
        EdgeOutcome::skipped_subnet_min_edge);
}

TEST_CASE("replay oracle agrees on random matrices") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int checked = 0;
  for (int round = 0; round < 300; ++round) {
    std::vector<NodeId> nodes;
    for (int i = 0; i < 8; ++i) nodes.push_back("n" + std::to_string(i));
    std::vector<UndirectedEdge> edges;
    for (int i = 0; i < 8; ++i)
      for (int j = i + 1; j < 8; ++j)
        if (unit(rng) < 0.7)
          edges.push_back({nodes[i], nodes[j], 1.0 + unit(rng) * 99.0});

    auto run = partition_with_trace(edges, nodes, {1.20});
    ReplayResult replay = replay_trace(run.trace, edges, nodes);
    REQUIRE(replay.ok);
    REQUIRE(as_sets(run.partition) == replay.groups);
    ++checked;
  }
  CHECK(checked == 300);
}

TEST_CASE("accepted edges satisfied every threshold at acceptance time") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int round = 0; round < 100; ++round) {
    std::vector<NodeId> nodes;
    for (int i = 0; i < 8; ++i) nodes.push_back("n" + std::to_string(i));
    std::vector<UndirectedEdge> edges;
    for (int i = 0; i < 8; ++i)
      for (int j = i + 1; j < 8; ++j)
        if (unit(rng) < 0.8)
          edges.push_back({nodes[i], nodes[j], 1.0 + unit(rng) * 20.0});

    MergeTrace trace = explain(edges, nodes, {1.20});
    // replay_trace re-derives the conditions; any accepted edge violating a
    // bound would come back as an outcome mismatch.
    CHECK(replay_trace(trace, edges, nodes).ok);
  }
}

TEST_CASE("serialized partitions are identical across repeated runs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<NodeId> nodes;
  for (int i = 0; i < 12; ++i) nodes.push_back("n" + std::to_string(i));
  std::vector<UndirectedEdge> edges;
  for (size_t i = 0; i < nodes.size(); ++i)
    for (size_t j = i + 1; j < nodes.size(); ++j)
      edges.push_back({nodes[i], nodes[j], 1.0 + std::floor(unit(rng) * 5.0)});

  std::string first = serialize_partition(partition(edges, nodes, {1.20}));
  std::vector<UndirectedEdge> shuffled(edges);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::string second = serialize_partition(partition(shuffled, nodes, {1.20}));
  CHECK(first == second);
}

TEST_CASE("relabeling nodes relabels the partition") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int round = 0; round < 30; ++round) {
    std::vector<NodeId> nodes;
    for (int i = 0; i < 7; ++i) nodes.push_back("n" + std::to_string(i));
    // all-distinct weights so the tie-break cannot interact with labels
    std::set<double> used;
    std::vector<UndirectedEdge> edges;
    for (size_t i = 0; i < nodes.size(); ++i)
      for (size_t j = i + 1; j < nodes.size(); ++j) {
        if (unit(rng) > 0.7) continue;
        double w;
        do {
          w = 1.0 + unit(rng) * 50.0;
        } while (!used.insert(w).second);
        edges.push_back({nodes[i], nodes[j], w});
      }

    // permutation: nodes[i] -> "m<shuffled index>"
    std::vector<int> perm(nodes.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::map<NodeId, NodeId> forward, backward;
    for (size_t i = 0; i < nodes.size(); ++i) {
      NodeId renamed = "m" + std::to_string(perm[i]);
      forward[nodes[i]] = renamed;
      backward[renamed] = nodes[i];
    }

    std::vector<UndirectedEdge> renamed_edges;
    for (const auto& e : edges)
      renamed_edges.push_back({forward[e.a], forward[e.b], e.weight_us});
    std::vector<NodeId> renamed_nodes;
    for (const auto& n : nodes) renamed_nodes.push_back(forward[n]);

    auto base = as_sets(partition(edges, nodes, {1.20}));
    auto permuted = as_sets(partition(renamed_edges, renamed_nodes, {1.20}));
    std::vector<std::set<NodeId>> mapped;
    for (const auto& group : permuted) {
      std::set<NodeId> g;
      for (const NodeId& n : group) g.insert(backward[n]);
      mapped.push_back(std::move(g));
    }
    std::sort(mapped.begin(), mapped.end());
    CHECK(base == mapped);
  }
}

TEST_CASE("tolerance one with distinct weights only merges through minima") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int round = 0; round < 50; ++round) {
    std::vector<NodeId> nodes;
    for (int i = 0; i < 8; ++i) nodes.push_back("n" + std::to_string(i));
    std::set<double> used;
    std::vector<UndirectedEdge> edges;
    for (size_t i = 0; i < nodes.size(); ++i)
      for (size_t j = i + 1; j < nodes.size(); ++j) {
        if (unit(rng) > 0.6) continue;
        double w;
        do {
          w = 1.0 + unit(rng) * 40.0;
        } while (!used.insert(w).second);
        edges.push_back({nodes[i], nodes[j], w});
      }

    std::map<NodeId, double> min_edge;
    for (const auto& e : edges) {
      auto upd = [&](const NodeId& n) {
        auto it = min_edge.find(n);
        if (it == min_edge.end() || e.weight_us < it->second)
          min_edge[n] = e.weight_us;
      };
      upd(e.a);
      upd(e.b);
    }

    MergeTrace trace = explain(edges, nodes, {1.0});
    for (const EdgeDecision& d : trace.decisions)
      if (d.accepted()) {
        CHECK(d.weight == min_edge[d.a]);
        CHECK(d.weight == min_edge[d.b]);
      }
  }
}

TEST_CASE("merge trace round-trips through its file format") {
  auto run =
      partition_with_trace(two_pair_edges(), {"a", "b", "c", "d"}, {1.20});
  std::string text = serialize_trace(run.trace);
  CHECK(parse_trace(text) == run.trace);
  CHECK(serialize_trace(parse_trace(text)) == text);
}
