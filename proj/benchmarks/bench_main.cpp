// Microbenchmarks for the hot paths of the redesign loop: canonicalization
// and hashing (every oracle call goes through them), modification
// application, the two search strategies, and reward attribution.

#include <benchmark/benchmark.h>

#include <optional>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "trialmend/explore.hpp"
#include "trialmend/hash.hpp"
#include "trialmend/modification.hpp"
#include "trialmend/oracle.hpp"
#include "trialmend/protocol.hpp"

using namespace trialmend;

namespace {

/// Four groups with three options each: a 4^4 = 256-candidate space.
struct BenchSpace {
  TrialProtocol base = testutil::eye_trial();
  ScoringSpec spec;
  std::vector<ChoiceGroup> groups;
};

BenchSpace make_space() {
  BenchSpace s;
  s.spec.base = 0.4;
  std::vector<Augmentation> fresh;
  const char* aspects[4] = {"dosage", "target_primary_outcome",
                            "eligibility/inclusion_criteria",
                            "eligibility/exclusion_criteria"};
  for (int g = 0; g < 4; ++g) {
    std::optional<int> index;
    if (g >= 2) index = 0;
    for (int o = 0; o < 3; ++o) {
      std::string token =
          "MARK" + std::to_string(g) + "V" + std::to_string(o);
      fresh.push_back(make_augmentation({aspects[g], index},
                                        ActionType::Modify,
                                        "variant " + token, "bench",
                                        0.9 - 0.1 * g));
      s.spec.rules.push_back({token, false, {}, 0.01 * (o + 1)});
    }
  }
  s.groups = build_groups(fresh, nullptr, s.base).groups;
  return s;
}

void BM_Canonicalize(benchmark::State& state) {
  TrialProtocol p = testutil::eye_trial();
  for (auto _ : state) {
    benchmark::DoNotOptimize(canonicalize(p));
  }
}
BENCHMARK(BM_Canonicalize);

void BM_HashProtocol(benchmark::State& state) {
  TrialProtocol p = testutil::eye_trial();
  for (auto _ : state) {
    benchmark::DoNotOptimize(hash_protocol(p));
  }
}
BENCHMARK(BM_HashProtocol);

void BM_ApplyModificationSet(benchmark::State& state) {
  BenchSpace s = make_space();
  ModificationSet mods;
  for (const ChoiceGroup& g : s.groups) mods.add(g.options.front());
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply(s.base, mods));
  }
}
BENCHMARK(BM_ApplyModificationSet);

void BM_ExhaustiveSearch(benchmark::State& state) {
  BenchSpace s = make_space();
  ReferenceOracle oracle(s.spec);
  double p0 = oracle.score(s.base);
  for (auto _ : state) {
    ScoreCache cache;  // cold cache: measures the full scoring pass
    benchmark::DoNotOptimize(
        exhaustive_search({&s.base, p0, &oracle, &cache}, s.groups));
  }
}
BENCHMARK(BM_ExhaustiveSearch);

void BM_BeamSearch(benchmark::State& state) {
  BenchSpace s = make_space();
  ReferenceOracle oracle(s.spec);
  double p0 = oracle.score(s.base);
  int width = static_cast<int>(state.range(0));
  for (auto _ : state) {
    ScoreCache cache;
    benchmark::DoNotOptimize(
        beam_search({&s.base, p0, &oracle, &cache}, s.groups, width));
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(4)->Arg(8);

void BM_AttributeRewards(benchmark::State& state) {
  BenchSpace s = make_space();
  ReferenceOracle oracle(s.spec);
  double p0 = oracle.score(s.base);
  ScoreCache cache;
  ExplorationResult res =
      exhaustive_search({&s.base, p0, &oracle, &cache}, s.groups);
  std::map<std::string, Augmentation> by_id;
  for (const ChoiceGroup& g : s.groups) {
    for (const Augmentation& a : g.options) by_id[a.id] = a;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(attribute_rewards(res.explored, by_id));
  }
}
BENCHMARK(BM_AttributeRewards);

}  // namespace

BENCHMARK_MAIN();
