#include <catch2/catch.hpp>

#include <random>
#include <set>

#include <topodisc/partition.hpp>
#include <topodisc/synth.hpp>

using namespace topodisc;

namespace {

std::vector<std::set<NodeId>> as_sets(const Partition& p) {
  std::vector<std::set<NodeId>> out;
  for (const Subnet& s : p.subnets)
    out.emplace_back(s.members.begin(), s.members.end());
  std::sort(out.begin(), out.end());
  return out;
}

bool recovers_ground_truth(const ScenarioSpec& spec, double tolerance) {
  SynthResult r = generate(spec);
  Partition got =
      partition(symmetrize(r.matrix), r.matrix.nodes(), {tolerance});
  return as_sets(got) == as_sets(r.ground_truth);
}

}  // namespace

TEST_CASE("idpot preset shape") {
  ScenarioSpec spec = idpot_preset();
  REQUIRE(spec.groups.size() == 6);
  int total = 0;
  for (const auto& g : spec.groups) total += g.size;
  CHECK(total == 20);
  // every group pair priced
  CHECK(spec.inter_latency_us.size() == 6 * 5 / 2);
  // C and E links run 2-3x the other inter-group links
  double min_other = 1e9, max_other = 0;
  auto is_slow = [](const std::pair<std::string, std::string>& pair) {
    return pair.first == "C" || pair.second == "C" || pair.first == "E" ||
           pair.second == "E";
  };
  for (const auto& [pair, v] : spec.inter_latency_us)
    if (!is_slow(pair)) {
      min_other = std::min(min_other, v);
      max_other = std::max(max_other, v);
    }
  for (const auto& [pair, v] : spec.inter_latency_us)
    if (is_slow(pair)) {
      CHECK(v >= 2.0 * min_other);
      CHECK(v <= 3.0 * max_other);
    }
}

TEST_CASE("idpot preset is recovered at the default tolerance") {
  ScenarioSpec spec = idpot_preset();
  spec.jitter_fraction = 0.02;
  spec.seed = 42;
  SynthResult r = generate(spec);
  CHECK(r.matrix.nodes().size() == 20);

  Partition got = partition(symmetrize(r.matrix), r.matrix.nodes(), {1.20});
  CHECK(got.subnets.size() == 6);
  CHECK(as_sets(got) == as_sets(r.ground_truth));
}

TEST_CASE("idpot recovery is exact across the tolerance sweep at zero jitter") {
  ScenarioSpec spec = idpot_preset();
  spec.jitter_fraction = 0.0;
  for (double tol : {1.05, 1.1, 1.2, 1.3, 1.4, 1.5})
    CHECK(recovers_ground_truth(spec, tol));
}

TEST_CASE("single group collapses to one subnet") {
  ScenarioSpec spec;
  spec.groups = {{"g", 5, 40.0}};
  spec.jitter_fraction = 0.0;
  SynthResult r = generate(spec);
  Partition got = partition(symmetrize(r.matrix), r.matrix.nodes(), {1.20});
  CHECK(got.subnets.size() == 1);
}

TEST_CASE("two groups with no separation merge") {
  ScenarioSpec spec;
  spec.groups = {{"g", 2, 50.0}, {"h", 2, 50.0}};
  spec.inter_latency_us[{"g", "h"}] = 50.0;
  spec.jitter_fraction = 0.0;
  SynthResult r = generate(spec);
  Partition got = partition(symmetrize(r.matrix), r.matrix.nodes(), {1.20});
  CHECK(got.subnets.size() == 1);
}

TEST_CASE("equalizing A and D merges them into five subnets") {
  ScenarioSpec spec = idpot_preset();
  for (auto& g : spec.groups)
    if (g.label == "A" || g.label == "D") g.intra_latency_us = 45.0;
  spec.inter_latency_us[{"A", "D"}] = 45.0;
  for (uint64_t seed : {1, 7, 23}) {
    spec.seed = seed;
    SynthResult r = generate(spec);
    Partition got = partition(symmetrize(r.matrix), r.matrix.nodes(), {1.20});
    CHECK(got.subnets.size() == 5);
  }
}

TEST_CASE("generation is deterministic per seed") {
  ScenarioSpec spec = idpot_preset();
  spec.seed = 77;
  std::string a = serialize_distance_matrix(generate(spec).matrix);
  std::string b = serialize_distance_matrix(generate(spec).matrix);
  CHECK(a == b);
  spec.seed = 78;
  CHECK(serialize_distance_matrix(generate(spec).matrix) != a);
}

TEST_CASE("recovery holds for random well-separated scenarios") {
  // separation ratio >= 2 between inter and intra, jitter <= 2%, groups >= 2
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int round = 0; round < 40; ++round) {
    ScenarioSpec spec;
    int groups = 2 + int(rng() % 5);
    double max_intra = 0;
    for (int g = 0; g < groups; ++g) {
      double intra = 20.0 + unit(rng) * 60.0;
      max_intra = std::max(max_intra, intra);
      spec.groups.push_back(
          {std::string(1, char('a' + g)), 2 + int(rng() % 4), intra});
    }
    for (int g = 0; g < groups; ++g)
      for (int h = g + 1; h < groups; ++h)
        spec.inter_latency_us[{spec.groups[g].label, spec.groups[h].label}] =
            2.0 * max_intra * (1.0 + unit(rng));
    spec.jitter_fraction = 0.02;
    spec.seed = rng();
    CHECK(recovers_ground_truth(spec, 1.20));
  }
}

TEST_CASE("ground truth satisfies partition invariants") {
  ScenarioSpec spec = idpot_preset();
  SynthResult r = generate(spec);
  CHECK_NOTHROW(validate_partition(r.ground_truth, r.matrix.nodes()));
}

TEST_CASE("missing inter latency is a spec error") {
  ScenarioSpec spec;
  spec.groups = {{"g", 2, 50.0}, {"h", 2, 50.0}};
  CHECK_THROWS_WITH(generate(spec), Catch::Contains("no inter latency"));
}

TEST_CASE("scenario validation") {
  ScenarioSpec spec = idpot_preset();
  spec.jitter_fraction = 0.2;
  CHECK_THROWS_AS(generate(spec), ValidationError);
  spec = idpot_preset();
  spec.groups[0].size = 0;
  CHECK_THROWS_AS(generate(spec), ValidationError);
  spec = idpot_preset();
  spec.groups[1].label = "A";
  CHECK_THROWS_WITH(generate(spec), Catch::Contains("duplicate group label"));
}

TEST_CASE("scenario file round-trips") {
  ScenarioSpec spec = idpot_preset();
  spec.seed = 9;
  spec.jitter_fraction = 0.01;
  std::string text = serialize_scenario(spec);
  ScenarioSpec back = parse_scenario(text);
  CHECK(serialize_scenario(back) == text);
  CHECK(serialize_distance_matrix(generate(back).matrix) ==
        serialize_distance_matrix(generate(spec).matrix));
}
