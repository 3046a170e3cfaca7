// Acceptance harness: ten go/no-go properties of the redesign engine,
// printed one line each ("criterion N: PASS/FAIL — detail"). Exit status is
// nonzero when any criterion fails. Every tolerance and time budget is
// pinned below; the checks recompute expectations independently (odometer
// enumeration, two-pass statistics, hand percentiles) rather than trusting
// the engine's own arithmetic.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "appendix_fixtures.hpp"
#include "helpers.hpp"
#include "trialmend/engine.hpp"
#include "trialmend/errors.hpp"
#include "trialmend/explore.hpp"
#include "trialmend/memory.hpp"
#include "trialmend/modification.hpp"
#include "trialmend/oracle.hpp"
#include "trialmend/protocol.hpp"
#include "trialmend/synthetic.hpp"
#include "trialmend/tagged.hpp"

using namespace trialmend;

namespace {

// ---------------------------------------------------------------------------
// Pinned tolerances, budgets, and frozen expectations.

constexpr double kTolAttribution = 1e-12;  // criterion 1
constexpr double kTolPlantedMean = 1e-9;   // criterion 4
constexpr double kTolStreaming = 1e-12;    // criterion 10
// Mean designed improvement of the seeded 20-trial corpus, frozen from the
// closed-form plant (sum of scheduled per-iteration gains / 20).
constexpr double kFrozenPlantedMean = 0.16586742356738049;

constexpr int kSpaces = 24;        // random factorial spaces, criteria 1-2
constexpr int kBeamFixtures = 20;  // criterion 3

constexpr double kBudget[11] = {0, 10, 10, 20, 60, 60, 120, 0, 0, 0, 0};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 12) {
  std::ostringstream out;
  out.precision(digits);
  out << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// Random factorial spaces shared by criteria 1 and 2. Slots: the two string
// aspects plus one inclusion and one exclusion entry (those two admit Delete
// options whose effect flows through base-text scoring rules). Space size is
// capped at 4^4 = 256 combinations by construction.

struct SpaceFixture {
  TrialProtocol base;
  ScoringSpec spec;
  std::vector<Augmentation> fresh;
};

SpaceFixture random_space(std::mt19937_64& rng, int tag) {
  SpaceFixture f;
  f.base = testutil::eye_trial();
  f.spec.base = 0.5;

  std::uniform_real_distribution<double> weight(-0.12, 0.12);
  int token = 0;
  auto tok = [&]() {
    return "TOK" + std::to_string(tag) + "X" + std::to_string(token++);
  };
  auto rule = [&](const std::string& pattern) {
    f.spec.rules.push_back({pattern, false, {}, weight(rng)});
  };

  std::vector<int> slots{0, 1, 2, 3};
  std::shuffle(slots.begin(), slots.end(), rng);
  slots.resize(2 + static_cast<int>(rng() % 3));  // 2-4 groups

  for (int s : slots) {
    int n_opts = 1 + static_cast<int>(rng() % 3);  // 1-3 options per slot
    switch (s) {
      case 0:
        for (int i = 0; i < n_opts; ++i) {
          std::string t = tok();
          f.fresh.push_back(make_augmentation(
              {std::string(kDosage), std::nullopt}, ActionType::Modify,
              "dose variant " + t, "vary exposure", 0.6));
          rule(t);
        }
        break;
      case 1:
        for (int i = 0; i < n_opts; ++i) {
          std::string t = tok();
          f.fresh.push_back(make_augmentation(
              {std::string(kTargetPrimaryOutcome), std::nullopt},
              ActionType::Modify, "endpoint variant " + t, "retarget", 0.5));
          rule(t);
        }
        break;
      case 2:
        // Base text of inclusion[1] scores, so deleting it moves the score.
        rule("wait to undergo");
        f.fresh.push_back(make_augmentation(
            {std::string(kInclusionCriteria), 1}, ActionType::Delete,
            std::nullopt, "remove barrier", 0.7));
        for (int i = 1; i < n_opts; ++i) {
          std::string t = tok();
          f.fresh.push_back(make_augmentation(
              {std::string(kInclusionCriteria), 1}, ActionType::Modify,
              "criterion variant " + t, "soften barrier", 0.65));
          rule(t);
        }
        break;
      default:
        rule("corneal ulceration");
        f.fresh.push_back(make_augmentation(
            {std::string(kExclusionCriteria), 0}, ActionType::Delete,
            std::nullopt, "drop exclusion", 0.55));
        for (int i = 1; i < n_opts; ++i) {
          std::string t = tok();
          f.fresh.push_back(make_augmentation(
              {std::string(kExclusionCriteria), 0}, ActionType::Modify,
              "exclusion variant " + t, "narrow exclusion", 0.5));
          rule(t);
        }
        break;
    }
  }
  return f;
}

// Ranking identical to the engine's published tie-break (score descending,
// then protocol hash, then id list), re-stated here so the enumeration side
// does not share code with the implementation.
bool ranks_before(const CandidateResult& a, const CandidateResult& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.protocol_hash != b.protocol_hash) {
    return a.protocol_hash < b.protocol_hash;
  }
  return a.augmentation_ids < b.augmentation_ids;
}

// ---------------------------------------------------------------------------
// Criterion 1: marginal attribution vs brute force.

Verdict criterion1() {
  std::mt19937_64 rng(20260819);
  int rewards_checked = 0;
  for (int s = 0; s < kSpaces; ++s) {
    SpaceFixture f = random_space(rng, s);
    ReferenceOracle oracle(f.spec);
    BuildGroupsResult built = build_groups(f.fresh, nullptr, f.base);
    std::uint64_t space = estimate_space(built.groups);
    if (space > 256) {
      return {false, "space " + std::to_string(s) + " has " +
                         std::to_string(space) + " candidates (cap 256)"};
    }
    ScoreCache cache;
    ExplorationResult res = exhaustive_search(
        {&f.base, oracle.score(f.base), &oracle, &cache}, built.groups);
    if (res.explored.size() != space) {
      return {false, "space " + std::to_string(s) +
                         " lost candidates: " +
                         std::to_string(res.explored.size()) + " of " +
                         std::to_string(space)};
    }

    std::size_t option_count = 0;
    for (const auto& g : built.groups) option_count += g.options.size();
    if (res.rewards.size() != option_count) {
      return {false, "space " + std::to_string(s) + " attributed " +
                         std::to_string(res.rewards.size()) + " of " +
                         std::to_string(option_count) + " options"};
    }

    for (const RewardRecord& rec : res.rewards) {
      double with_sum = 0.0, without_sum = 0.0;
      int with_n = 0, without_n = 0;
      for (const CandidateResult& c : res.explored) {
        bool has = std::find(c.augmentation_ids.begin(),
                             c.augmentation_ids.end(),
                             rec.augmentation_id) != c.augmentation_ids.end();
        if (has) {
          with_sum += c.score;
          ++with_n;
        } else {
          without_sum += c.score;
          ++without_n;
        }
      }
      if (rec.n_with != with_n || rec.n_without != without_n) {
        return {false, "candidate counts disagree for " + rec.augmentation_id};
      }
      if (with_n == 0 || without_n == 0) {
        if (rec.attributable()) {
          return {false,
                  "one-sided augmentation " + rec.augmentation_id +
                      " should not be attributable"};
        }
        continue;
      }
      double expected = with_sum / with_n - without_sum / without_n;
      if (!rec.attributable() ||
          std::abs(*rec.r - expected) > kTolAttribution) {
        return {false, "r(" + rec.augmentation_id + ") = " +
                           (rec.r ? fmt(*rec.r) : std::string("none")) +
                           ", brute force " + fmt(expected)};
      }
      ++rewards_checked;
    }
  }
  return {true, std::to_string(rewards_checked) + " rewards across " +
                    std::to_string(kSpaces) +
                    " factorial spaces match brute force within 1e-12"};
}

// ---------------------------------------------------------------------------
// Criterion 2: exhaustive argmax vs independent odometer enumeration.

Verdict criterion2() {
  std::mt19937_64 rng(20260819);  // regenerates criterion 1's spaces
  for (int s = 0; s < kSpaces; ++s) {
    SpaceFixture f = random_space(rng, s);
    ReferenceOracle oracle(f.spec);
    BuildGroupsResult built = build_groups(f.fresh, nullptr, f.base);
    ScoreCache cache;
    ExplorationResult res = exhaustive_search(
        {&f.base, oracle.score(f.base), &oracle, &cache}, built.groups);
    if (!res.best) return {false, "space " + std::to_string(s) + ": no best"};

    // Odometer over (options + 1) digits per group; digit 0 = leave alone.
    ReferenceOracle scorer(f.spec);
    std::vector<std::size_t> digit(built.groups.size(), 0);
    std::optional<CandidateResult> champion;
    while (true) {
      ModificationSet selection;
      for (std::size_t g = 0; g < digit.size(); ++g) {
        if (digit[g] > 0) {
          selection.add(built.groups[g].options[digit[g] - 1]);
        }
      }
      TrialProtocol derived = apply(f.base, selection);
      CandidateResult c;
      c.augmentation_ids = selection.ids();
      c.protocol_hash = hash_protocol(derived);
      c.score = scorer.score(derived);
      if (!champion || ranks_before(c, *champion)) champion = c;

      std::size_t g = 0;
      while (g < digit.size()) {
        if (++digit[g] <= built.groups[g].options.size()) break;
        digit[g] = 0;
        ++g;
      }
      if (g == digit.size()) break;
    }

    if (res.best->score != champion->score ||
        res.best->protocol_hash != champion->protocol_hash ||
        res.best->augmentation_ids != champion->augmentation_ids) {
      return {false, "space " + std::to_string(s) + ": exhaustive best " +
                         fmt(res.best->score) + " != enumerated argmax " +
                         fmt(champion->score)};
    }
  }
  return {true, std::to_string(kSpaces) +
                    " spaces: exhaustive best equals the enumerated argmax "
                    "(score, hash, and id list)"};
}

// ---------------------------------------------------------------------------
// Criterion 3: beam consistency. Even fixtures are purely additive with
// non-negative weights (every width reaches the same optimum); odd fixtures
// plant a shared-pattern interaction between the two leading groups, which
// width 1 provably walks past, so the staircase is exercised for real.

SpaceFixture beam_fixture(std::mt19937_64& rng, int i) {
  SpaceFixture f;
  f.base = testutil::eye_trial();
  f.spec.base = 0.3;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int token = 0;
  auto tok = [&]() {
    return "BEAM" + std::to_string(i) + "X" + std::to_string(token++);
  };

  if (i % 2 == 1) {
    // Interaction trap. Dosage group leads (highest confidence): plain
    // option worth x, shared-pattern option worth s > x. Outcome group
    // follows: shared-pattern option (same rule, fires once per protocol)
    // and a plain option worth y < x. Width 1 greedily keeps the shared
    // dosage option and tops out at s + y; the optimum x + s needs width 2.
    double x = 0.06 + 0.03 * unit(rng);
    double s = 0.10 + 0.02 * unit(rng);
    double y = 0.03 + 0.02 * unit(rng);
    std::string shared = "SHARED" + std::to_string(i);
    std::string plain_dose = tok();
    std::string plain_outcome = tok();

    f.fresh.push_back(make_augmentation(
        {std::string(kDosage), std::nullopt}, ActionType::Modify,
        "dose variant " + plain_dose, "vary exposure", 0.9));
    f.fresh.push_back(make_augmentation(
        {std::string(kDosage), std::nullopt}, ActionType::Modify,
        "dose variant " + shared, "vary exposure", 0.85));
    f.fresh.push_back(make_augmentation(
        {std::string(kTargetPrimaryOutcome), std::nullopt},
        ActionType::Modify, "endpoint variant " + shared, "retarget", 0.8));
    f.fresh.push_back(make_augmentation(
        {std::string(kTargetPrimaryOutcome), std::nullopt},
        ActionType::Modify, "endpoint variant " + plain_outcome, "retarget",
        0.75));
    f.spec.rules.push_back({plain_dose, false, {}, x});
    f.spec.rules.push_back({shared, false, {}, s});
    f.spec.rules.push_back({plain_outcome, false, {}, y});

    // Independent non-negative tail groups keep the optimum recognizable at
    // every width while growing the space.
    if (i % 4 == 1) {
      std::string t = tok();
      f.fresh.push_back(make_augmentation(
          {std::string(kInclusionCriteria), 0}, ActionType::Modify,
          "criterion variant " + t, "broaden", 0.5));
      f.spec.rules.push_back({t, false, {}, 0.005 + 0.04 * unit(rng)});
    }
  } else {
    // Purely additive, non-negative, unique tokens: greedy is optimal, so
    // every width lands on the same best score.
    int n_groups = 2 + static_cast<int>(rng() % 3);
    for (int g = 0; g < n_groups; ++g) {
      int n_opts = 1 + static_cast<int>(rng() % 3);
      for (int o = 0; o < n_opts; ++o) {
        std::string t = tok();
        double w = 0.005 + 0.045 * unit(rng);
        double conf = 0.8 - 0.1 * g;
        switch (g) {
          case 0:
            f.fresh.push_back(make_augmentation(
                {std::string(kDosage), std::nullopt}, ActionType::Modify,
                "dose variant " + t, "vary exposure", conf));
            break;
          case 1:
            f.fresh.push_back(make_augmentation(
                {std::string(kTargetPrimaryOutcome), std::nullopt},
                ActionType::Modify, "endpoint variant " + t, "retarget",
                conf));
            break;
          case 2:
            f.fresh.push_back(make_augmentation(
                {std::string(kInclusionCriteria), 0}, ActionType::Modify,
                "criterion variant " + t, "broaden", conf));
            break;
          default:
            f.fresh.push_back(make_augmentation(
                {std::string(kExclusionCriteria), 0}, ActionType::Modify,
                "exclusion variant " + t, "narrow", conf));
            break;
        }
        f.spec.rules.push_back({t, false, {}, w});
      }
    }
  }
  return f;
}

Verdict criterion3() {
  std::mt19937_64 rng(31);
  int staircase_steps = 0;
  for (int i = 0; i < kBeamFixtures; ++i) {
    SpaceFixture f = beam_fixture(rng, i);
    ReferenceOracle oracle(f.spec);
    BuildGroupsResult built = build_groups(f.fresh, nullptr, f.base);
    double p0 = oracle.score(f.base);

    ScoreCache cache_ex;
    ExplorationResult ex = exhaustive_search(
        {&f.base, p0, &oracle, &cache_ex}, built.groups);

    // Width >= space degenerates to exhaustive: same best, same ranking.
    int wide = static_cast<int>(estimate_space(built.groups));
    ScoreCache cache_wide;
    ExplorationResult degenerate = beam_search(
        {&f.base, p0, &oracle, &cache_wide}, built.groups, wide);
    if (degenerate.explored.size() != ex.explored.size()) {
      return {false, "fixture " + std::to_string(i) +
                         ": wide beam explored " +
                         std::to_string(degenerate.explored.size()) +
                         " candidates, exhaustive " +
                         std::to_string(ex.explored.size())};
    }
    for (std::size_t k = 0; k < ex.explored.size(); ++k) {
      if (degenerate.explored[k].augmentation_ids !=
              ex.explored[k].augmentation_ids ||
          degenerate.explored[k].protocol_hash !=
              ex.explored[k].protocol_hash ||
          degenerate.explored[k].score != ex.explored[k].score) {
        return {false, "fixture " + std::to_string(i) +
                           ": wide-beam ranking diverges at position " +
                           std::to_string(k)};
      }
    }
    if (!degenerate.best || !ex.best ||
        degenerate.best->augmentation_ids != ex.best->augmentation_ids) {
      return {false, "fixture " + std::to_string(i) +
                         ": wide beam best differs from exhaustive"};
    }

    double previous = -1.0;
    for (int width : {1, 2, 4, 8}) {
      ScoreCache cache;
      ExplorationResult res =
          beam_search({&f.base, p0, &oracle, &cache}, built.groups, width);
      if (!res.best) {
        return {false, "fixture " + std::to_string(i) + ": beam width " +
                           std::to_string(width) + " found nothing"};
      }
      if (res.best->score < previous) {
        return {false, "fixture " + std::to_string(i) + ": width " +
                           std::to_string(width) + " best " +
                           fmt(res.best->score) +
                           " fell below a narrower beam's " + fmt(previous)};
      }
      if (res.best->score > previous && previous >= 0.0) ++staircase_steps;
      previous = res.best->score;
    }
  }
  return {true, std::to_string(kBeamFixtures) +
                    " fixtures: width >= space matches exhaustive exactly; "
                    "best non-decreasing over widths {1,2,4,8} (" +
                    std::to_string(staircase_steps) + " strict steps)"};
}

// ---------------------------------------------------------------------------
// Criteria 4-8 share the corpus and ablation procedures; criterion 8 reruns
// them and compares bytes.

std::vector<BatchTrial> to_batch(const SyntheticCorpus& corpus) {
  std::vector<BatchTrial> trials;
  for (const SyntheticTrial& t : corpus.trials) {
    trials.push_back({t.id, t.protocol, t.mode});
  }
  return trials;
}

struct CorpusRun {
  std::vector<BatchOutcome> outcomes;      // scripted-replay results
  std::vector<std::string> live_docs;      // recording pass
  std::vector<std::string> replay_docs;    // scripted pass
  std::string report_dump;
  double designed_mean = 0.0;
};

CorpusRun run_corpus_procedure() {
  SyntheticCorpus corpus = make_corpus({20, 7, 0.45});
  RunConfig cfg;
  std::vector<BatchTrial> trials = to_batch(corpus);

  CorpusRun run;
  for (const SyntheticTrial& t : corpus.trials) {
    run.designed_mean += t.designed_delta_p;
  }
  run.designed_mean /= static_cast<double>(corpus.trials.size());

  SyntheticAnalystProvider analyst;
  RecordingProvider recorder(analyst);
  ReferenceOracle live_oracle(corpus.scoring);
  std::vector<BatchOutcome> live = run_batch(trials, live_oracle, recorder,
                                             cfg, nullptr, AgentConfig{}, 1);
  for (const BatchOutcome& o : live) {
    run.live_docs.push_back(o.result.to_json(cfg).dump());
  }

  ScriptedProvider scripted(recorder.recorded());
  ReferenceOracle replay_oracle(corpus.scoring);
  run.outcomes = run_batch(trials, replay_oracle, scripted, cfg, nullptr,
                           AgentConfig{}, 1);
  for (const BatchOutcome& o : run.outcomes) {
    run.replay_docs.push_back(o.result.to_json(cfg).dump());
  }
  run.report_dump = corpus_report(run.outcomes, cfg).dump();
  return run;
}

struct AblationRun {
  std::vector<BatchOutcome> full, no_memory, no_pool;
  std::vector<std::string> docs;  // all three conditions, in order
};

AblationRun run_ablation_procedure() {
  AblationCorpus ab = make_ablation_corpus(10, 11);
  std::vector<BatchTrial> trials = to_batch(ab.corpus);

  auto condition = [&](bool use_memory, bool use_pool) {
    RunConfig cfg;
    cfg.use_memory = use_memory;
    cfg.use_pool = use_pool;
    GlobalMemory warm = ab.warm_memory;  // fresh copy per condition
    ReferenceOracle oracle(ab.corpus.scoring);
    SyntheticAnalystProvider provider;
    return std::make_pair(
        run_batch(trials, oracle, provider, cfg, &warm, AgentConfig{}, 1),
        cfg);
  };

  AblationRun run;
  auto [full, cfg_full] = condition(true, true);
  auto [no_memory, cfg_nm] = condition(false, true);
  auto [no_pool, cfg_np] = condition(true, false);
  for (const auto& o : full) run.docs.push_back(o.result.to_json(cfg_full).dump());
  for (const auto& o : no_memory) run.docs.push_back(o.result.to_json(cfg_nm).dump());
  for (const auto& o : no_pool) run.docs.push_back(o.result.to_json(cfg_np).dump());
  run.full = std::move(full);
  run.no_memory = std::move(no_memory);
  run.no_pool = std::move(no_pool);
  return run;
}

double mean_delta(const std::vector<BatchOutcome>& outcomes) {
  double sum = 0.0;
  for (const auto& o : outcomes) sum += o.result.delta_p;
  return outcomes.empty() ? 0.0 : sum / static_cast<double>(outcomes.size());
}

// Shared state across the trace-driven criteria.
struct Traces {
  bool corpus_ready = false;
  bool ablation_ready = false;
  CorpusRun corpus;
  AblationRun ablation;
  std::optional<OptimizationResult> empty_analysis;
};

Verdict criterion4(Traces& traces) {
  traces.corpus = run_corpus_procedure();
  traces.corpus_ready = true;
  const CorpusRun& run = traces.corpus;

  if (run.live_docs != run.replay_docs) {
    return {false, "scripted replay diverged from the recorded run"};
  }
  int positives = 0;
  for (const auto& o : run.outcomes) {
    if (o.result.delta_p > 0.0) ++positives;
  }
  double mean = mean_delta(run.outcomes);
  if (positives < 16) {
    return {false, "only " + std::to_string(positives) +
                       "/20 trials improved (need 16)"};
  }
  if (std::abs(mean - run.designed_mean) > kTolPlantedMean) {
    return {false, "mean dp " + fmt(mean) + " vs planted " +
                       fmt(run.designed_mean) + " exceeds 1e-9"};
  }
  if (std::abs(run.designed_mean - kFrozenPlantedMean) > kTolPlantedMean) {
    return {false, "planted expectation drifted: " + fmt(run.designed_mean) +
                       " vs frozen " + fmt(kFrozenPlantedMean)};
  }
  return {true, std::to_string(positives) + "/20 improved; mean dp " +
                    fmt(mean) + " matches the planted expectation within "
                    "1e-9 (replay byte-identical)"};
}

Verdict criterion5(const Traces& traces) {
  if (!traces.corpus_ready) return {false, "corpus run unavailable"};
  RunConfig cfg;
  nlohmann::json report = corpus_report(traces.corpus.outcomes, cfg);
  const auto& gains = report["per_iteration_mean_gain"];
  if (gains.size() != static_cast<std::size_t>(cfg.n_max)) {
    return {false, "gain curve has " + std::to_string(gains.size()) +
                       " entries, expected " + std::to_string(cfg.n_max)};
  }
  double first = gains[0].get<double>();
  std::string curve;
  for (const auto& g : gains) {
    if (!curve.empty()) curve += ", ";
    curve += fmt(g.get<double>(), 6);
  }
  for (std::size_t k = 1; k < gains.size(); ++k) {
    if (first < gains[k].get<double>()) {
      return {false, "iteration " + std::to_string(k + 1) + " gain " +
                         fmt(gains[k].get<double>()) +
                         " exceeds iteration 1's " + fmt(first) + " [" +
                         curve + "]"};
    }
  }
  return {true, "iteration-1 mean gain dominates: [" + curve + "]"};
}

Verdict criterion6(Traces& traces) {
  traces.ablation = run_ablation_procedure();
  traces.ablation_ready = true;
  const AblationRun& run = traces.ablation;

  double full = mean_delta(run.full);
  double no_memory = mean_delta(run.no_memory);
  double no_pool = mean_delta(run.no_pool);
  int strict_wins = 0;
  for (std::size_t i = 0; i < run.full.size(); ++i) {
    if (run.full[i].result.delta_p > run.no_memory[i].result.delta_p) {
      ++strict_wins;
    }
  }
  if (full < no_memory) {
    return {false, "full mean " + fmt(full) + " below no-memory " +
                       fmt(no_memory)};
  }
  if (full < no_pool) {
    return {false,
            "full mean " + fmt(full) + " below no-pool " + fmt(no_pool)};
  }
  if (strict_wins < 7) {
    return {false, "memory ablation strictly improved only " +
                       std::to_string(strict_wins) + "/10 trials (need 7)"};
  }
  return {true, "full " + fmt(full, 6) + " >= no-memory " +
                    fmt(no_memory, 6) + " and no-pool " + fmt(no_pool, 6) +
                    "; " + std::to_string(strict_wins) +
                    "/10 strict wins over no-memory"};
}

Verdict criterion7(Traces& traces) {
  if (!traces.corpus_ready || !traces.ablation_ready) {
    return {false, "upstream traces unavailable"};
  }

  // The sound-protocol fixture, run through the same engine entry point.
  SyntheticCorpus corpus = make_corpus({20, 7, 0.45});
  SyntheticTrial sound = make_empty_analysis_trial();
  ReferenceOracle oracle(corpus.scoring);
  SyntheticAnalystProvider provider;
  RunConfig cfg;
  traces.empty_analysis = optimize(sound.protocol, sound.mode, oracle,
                                   provider, cfg, nullptr, AgentConfig{});

  std::vector<const OptimizationResult*> all;
  for (const auto& o : traces.corpus.outcomes) all.push_back(&o.result);
  for (const auto& o : traces.ablation.full) all.push_back(&o.result);
  for (const auto& o : traces.ablation.no_memory) all.push_back(&o.result);
  for (const auto& o : traces.ablation.no_pool) all.push_back(&o.result);
  all.push_back(&*traces.empty_analysis);

  int guidance_first = 0;
  for (const OptimizationResult* r : all) {
    if (r->iterations.size() > 5) {
      return {false, "a run used " + std::to_string(r->iterations.size()) +
                         " iterations (cap 5)"};
    }
    for (std::size_t k = 1; k < r->r_best_trajectory.size(); ++k) {
      if (r->r_best_trajectory[k] < r->r_best_trajectory[k - 1]) {
        return {false, "r_best fell between iterations " +
                           std::to_string(k) + " and " +
                           std::to_string(k + 1)};
      }
    }
    for (const PromptLogEntry& e : r->prompt_log) {
      bool carries =
          e.prompt.find("<strategic_guidance>") != std::string::npos;
      if (carries && e.iteration != 1) {
        return {false, "strategic guidance leaked into iteration " +
                           std::to_string(e.iteration) + " (" + e.stage +
                           ")"};
      }
      if (carries && e.iteration == 1) ++guidance_first;
    }
  }
  for (const auto& o : traces.ablation.full) {
    bool seeded = false;
    for (const PromptLogEntry& e : o.result.prompt_log) {
      if (e.iteration == 1 &&
          e.prompt.find("<strategic_guidance>") != std::string::npos) {
        seeded = true;
      }
    }
    if (!seeded) {
      return {false, "warm run " + o.id +
                         " never received strategic guidance at t=1"};
    }
  }

  const OptimizationResult& sound_run = *traces.empty_analysis;
  if (sound_run.termination != Termination::EmptyAnalysis ||
      sound_run.delta_p != 0.0 || sound_run.iterations.size() != 1) {
    return {false, "sound-protocol run: termination " +
                       to_token(sound_run.termination) + ", dp " +
                       fmt(sound_run.delta_p) + ", " +
                       std::to_string(sound_run.iterations.size()) +
                       " iterations"};
  }

  return {true, std::to_string(all.size()) +
                    " traces: iterations <= 5, trajectories non-decreasing, "
                    "guidance only at t=1 (" +
                    std::to_string(guidance_first) +
                    " seeded prompts), sound protocol exits with dp = 0"};
}

Verdict criterion8(const Traces& traces) {
  if (!traces.corpus_ready || !traces.ablation_ready) {
    return {false, "upstream traces unavailable"};
  }
  CorpusRun corpus_again = run_corpus_procedure();
  AblationRun ablation_again = run_ablation_procedure();

  if (corpus_again.live_docs != traces.corpus.live_docs ||
      corpus_again.replay_docs != traces.corpus.replay_docs ||
      corpus_again.report_dump != traces.corpus.report_dump) {
    return {false, "corpus rerun produced different bytes"};
  }
  if (ablation_again.docs != traces.ablation.docs) {
    return {false, "ablation rerun produced different bytes"};
  }
  std::size_t docs = corpus_again.live_docs.size() +
                     corpus_again.replay_docs.size() +
                     ablation_again.docs.size() + 1;
  return {true, std::to_string(docs) +
                    " result documents byte-identical across reruns"};
}

// ---------------------------------------------------------------------------
// Criterion 9: the recorded-output fixtures parse into the documented
// structures, and the documented failures are raised for malformed inputs.

Verdict criterion9() {
  std::vector<std::string> faults;
  auto expect = [&faults](bool ok, const std::string& what) {
    if (!ok) faults.push_back(what);
  };

  try {
    auto blocks = parse_classification(fixtures::kClassification);
    expect(blocks.size() == 1, "classification block count");
    if (!blocks.empty()) {
      expect(blocks[0].score(PatternCategory::ParticipationBarrier) == 0.92,
             "classification barrier score");
      expect(blocks[0].primary == PatternCategory::ParticipationBarrier,
             "classification primary category");
      expect(blocks[0].aspect && blocks[0].aspect->index == 1,
             "classification aspect index");
    }
  } catch (const std::exception& e) {
    faults.push_back(std::string("classification fixture threw: ") + e.what());
  }

  try {
    DesignPivots p = parse_design_pivots(fixtures::kPivots);
    expect(p.get("trial_type") == "PK_SAFETY", "pivots trial type");
    expect(p.get("summary").find("to <5") != std::string::npos,
           "pivots salvaged truncated summary");
  } catch (const std::exception& e) {
    faults.push_back(std::string("pivots fixture threw: ") + e.what());
  }

  try {
    AdverseEventProfile p = parse_adverse_event_profile(fixtures::kAeProfile);
    expect(p.primary_toxicity && p.primary_toxicity->event == "Hepatotoxicity",
           "profile event");
    expect(p.primary_toxicity && p.primary_toxicity->incidence == "25",
           "profile salvaged incidence");
    expect(p.critical_gaps.size() == 2, "profile gap count");
  } catch (const std::exception& e) {
    faults.push_back(std::string("profile fixture threw: ") + e.what());
  }

  try {
    auto variants = parse_dosage_augmentations(fixtures::kDosageSample);
    expect(variants.size() == 3, "dosage variant count");
    if (!variants.empty()) {
      expect(variants[0].value == "50mg oral daily for 28 days",
             "dosage variant value");
    }
  } catch (const std::exception& e) {
    faults.push_back(std::string("dosage fixture threw: ") + e.what());
  }

  try {
    auto values = parse_augmentations(fixtures::kEligibility);
    expect(values.size() == 3, "eligibility variant count");
  } catch (const std::exception& e) {
    faults.push_back(std::string("eligibility fixture threw: ") + e.what());
  }

  try {
    auto blocks = parse_tradeoffs(fixtures::kDosageTradeoff);
    expect(blocks.size() == 1, "tradeoff block count");
    if (!blocks.empty()) {
      expect(blocks[0].net_recommendation == "MODIFY",
             "tradeoff recommendation");
      expect(blocks[0].confidence == 0.85, "tradeoff confidence");
    }
  } catch (const std::exception& e) {
    faults.push_back(std::string("tradeoff fixture threw: ") + e.what());
  }

  try {
    MechanismFindings m = parse_mechanism(fixtures::kMechanism);
    expect(m.missing_enrichment_criterion &&
               !m.missing_enrichment_criterion->empty(),
           "mechanism enrichment criterion");
  } catch (const std::exception& e) {
    faults.push_back(std::string("mechanism fixture threw: ") + e.what());
  }

  try {
    AgentOutputDocument out = parse_agent_output(fixtures::kAgentOutput);
    expect(out.plans.size() == 2, "agent output plan count");
    if (out.plans.size() == 2) {
      expect(out.plans[0].target.index == 1, "agent output plan index");
      expect(out.plans[0].values.size() == 2, "agent output variant count");
    }
  } catch (const std::exception& e) {
    faults.push_back(std::string("agent output fixture threw: ") + e.what());
  }

  // Documented failures.
  {
    std::string unclosed = fixtures::kClassification;
    unclosed.erase(unclosed.find("</classification>"));
    try {
      parse_classification(unclosed);
      faults.push_back("unclosed block accepted");
    } catch (const TruncatedBlock&) {
    } catch (const std::exception& e) {
      faults.push_back(std::string("unclosed block wrong error: ") + e.what());
    }
  }
  {
    std::string high = fixtures::kClassification;
    high.replace(high.find("0.92"), 4, "1.70");
    try {
      parse_classification(high);
      faults.push_back("out-of-range score accepted");
    } catch (const MalformedNumber&) {
    } catch (const std::exception& e) {
      faults.push_back(std::string("out-of-range score wrong error: ") +
                       e.what());
    }
  }
  try {
    parse_design_pivots("no tags in sight, just prose");
    faults.push_back("plain prose accepted as pivots");
  } catch (const NoBlockFound&) {
  } catch (const std::exception& e) {
    faults.push_back(std::string("plain prose wrong error: ") + e.what());
  }
  try {
    parse_agent_output("definitely not json");
    faults.push_back("non-JSON accepted as agent output");
  } catch (const MalformedDocument&) {
  } catch (const std::exception& e) {
    faults.push_back(std::string("non-JSON wrong error: ") + e.what());
  }

  if (!faults.empty()) {
    std::string joined;
    for (const auto& f : faults) {
      if (!joined.empty()) joined += "; ";
      joined += f;
    }
    return {false, joined};
  }
  return {true, "8 recorded-output fixtures parse; truncated block, "
                "out-of-range score, plain prose, and non-JSON raise the "
                "documented errors"};
}

// ---------------------------------------------------------------------------
// Criterion 10: streaming statistics vs batch recomputation, and the pool
// gate on every engine trace.

std::optional<double> hand_p75(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(0.75 * static_cast<double>(values.size())));
  if (rank == 0) rank = 1;
  return values[rank - 1];
}

Verdict criterion10(const Traces& traces) {
  // Part one: three transfers into one store, checked against two-pass
  // statistics accumulated independently.
  GlobalMemory global;
  std::map<std::string, std::vector<double>> by_key;
  std::map<std::string, std::map<std::string, std::vector<double>>> by_action;
  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> dist(-0.06, 0.1);

  for (int run = 0; run < 3; ++run) {
    LocalMemory local;
    IterationExperience exp;
    exp.t = 1;
    std::vector<RewardRecord> rewards;
    for (int k = 0; k < 6; ++k) {
      Augmentation a;
      if (k % 2 == 0) {
        a = make_augmentation(
            {std::string(kInclusionCriteria), k / 2}, ActionType::Delete,
            std::nullopt, "remove barrier", 0.7);
        a.category = PatternCategory::ParticipationBarrier;
      } else {
        a = make_augmentation(
            {std::string(kDosage), std::nullopt}, ActionType::Modify,
            "dose case " + std::to_string(run) + "-" + std::to_string(k),
            "adjust exposure", 0.6);
      }
      double r = dist(rng);
      RewardRecord rec;
      rec.augmentation_id = a.id;
      rec.r = r;
      rec.n_with = 2;
      rec.n_without = 2;
      exp.augs[a.id] = a;
      rewards.push_back(rec);
      by_key[signature_key(a)].push_back(r);
      by_action[signature_key(a)][to_token(a.action)].push_back(r);
    }
    exp.rewards = rewards;
    exp.distilled = distill(rewards, exp.augs, {}, 1);
    local.record_iteration(std::move(exp));
    transfer(global, FailureMode::Safety, local, nullptr, nullptr, nullptr);
  }

  const ModeMemory& mode = global.mode(FailureMode::Safety);
  if (mode.runs != 3) {
    return {false, "expected 3 recorded runs, saw " +
                       std::to_string(mode.runs)};
  }
  for (const auto& [key, xs] : by_key) {
    auto it = mode.signatures.find(key);
    if (it == mode.signatures.end()) {
      return {false, "signature '" + key + "' missing after transfer"};
    }
    const CategorySignature& sig = it->second;
    double sum = 0.0;
    for (double x : xs) sum += x;
    double mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    double var = ss / static_cast<double>(xs.size());
    std::int64_t n_pos = 0;
    for (double x : xs) {
      if (x > 0.0) ++n_pos;
    }
    if (sig.n != static_cast<std::int64_t>(xs.size()) ||
        sig.n_pos != n_pos ||
        std::abs(sig.mean - mean) > kTolStreaming ||
        std::abs(sig.variance() - var) > kTolStreaming) {
      return {false, "signature '" + key + "': streaming (n=" +
                         std::to_string(sig.n) + ", mean=" + fmt(sig.mean) +
                         ", var=" + fmt(sig.variance()) +
                         ") vs batch (n=" + std::to_string(xs.size()) +
                         ", mean=" + fmt(mean) + ", var=" + fmt(var) + ")"};
    }
    for (const auto& [action, rs] : by_action[key]) {
      auto action_it = sig.actions.find(action);
      if (action_it == sig.actions.end() ||
          action_it->second.n != static_cast<std::int64_t>(rs.size())) {
        return {false, "per-action counts diverged for '" + key + "'/" +
                           action};
      }
    }
  }

  // Part two: the pool gate on every iteration of every engine trace.
  if (!traces.corpus_ready || !traces.ablation_ready ||
      !traces.empty_analysis) {
    return {false, "upstream traces unavailable"};
  }
  std::vector<const OptimizationResult*> all;
  for (const auto& o : traces.corpus.outcomes) all.push_back(&o.result);
  for (const auto& o : traces.ablation.full) all.push_back(&o.result);
  for (const auto& o : traces.ablation.no_memory) all.push_back(&o.result);
  for (const auto& o : traces.ablation.no_pool) all.push_back(&o.result);
  all.push_back(&*traces.empty_analysis);

  int iterations_checked = 0;
  for (const OptimizationResult* r : all) {
    for (const IterationReport& it : r->iterations) {
      std::vector<double> positives;
      for (const RewardRecord& rec : it.rewards) {
        if (rec.r && *rec.r > 0.0) positives.push_back(*rec.r);
      }
      std::optional<double> p75 = hand_p75(positives);
      if (it.positive_p75 != p75) {
        return {false, "iteration " + std::to_string(it.t) +
                           ": reported positive p75 " +
                           (it.positive_p75 ? fmt(*it.positive_p75)
                                            : std::string("none")) +
                           " vs recomputed " +
                           (p75 ? fmt(*p75) : std::string("none"))};
      }
      std::set<std::string> expected;
      if (p75) {
        for (const RewardRecord& rec : it.rewards) {
          if (rec.r && *rec.r > 0.0 && *rec.r >= *p75) {
            expected.insert(rec.augmentation_id);
          }
        }
      }
      std::set<std::string> actual(it.pool_added_ids.begin(),
                                   it.pool_added_ids.end());
      if (actual != expected) {
        return {false, "iteration " + std::to_string(it.t) + " pooled " +
                           std::to_string(actual.size()) +
                           " augmentations, gate admits " +
                           std::to_string(expected.size())};
      }
      ++iterations_checked;
    }
  }

  return {true, "streaming stats match batch within 1e-12 over 3 transfers; "
                "pool gate (r>0 and r >= p75 of positives) holds on " +
                    std::to_string(iterations_checked) +
                    " engine iterations"};
}

}  // namespace

int main() {
  Traces traces;
  std::vector<std::function<Verdict()>> criteria{
      [] { return criterion1(); },
      [] { return criterion2(); },
      [] { return criterion3(); },
      [&traces] { return criterion4(traces); },
      [&traces] { return criterion5(traces); },
      [&traces] { return criterion6(traces); },
      [&traces] { return criterion7(traces); },
      [&traces] { return criterion8(traces); },
      [] { return criterion9(); },
      [&traces] { return criterion10(traces); },
  };

  bool all_pass = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    auto started = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
            .count();
    double budget = kBudget[i + 1];
    if (v.pass && budget > 0.0 && seconds > budget) {
      v = {false, "over time budget: " + fmt(seconds, 3) + "s > " +
                      fmt(budget, 3) + "s (" + v.detail + ")"};
    }
    std::cout << "criterion " << (i + 1) << ": "
              << (v.pass ? "PASS" : "FAIL") << " — " << v.detail << " ["
              << fmt(seconds, 3) << "s]\n";
    if (!v.pass) all_pass = false;
  }
  return all_pass ? 0 : 1;
}
