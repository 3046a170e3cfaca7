#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmend/agents.hpp"
#include "trialmend/explore.hpp"
#include "trialmend/memory.hpp"
#include "trialmend/oracle.hpp"
#include "trialmend/protocol.hpp"
#include "trialmend/provider.hpp"

namespace trialmend {

struct CostRates {
  double per_token_in = 0.0;
  double per_token_out = 0.0;
};

struct RunConfig {
  int n_max = 5;
  int beam_width = 8;
  std::uint64_t space_threshold = 1000;  // below: exhaustive; at/above: beam
  /// Reported improvements below this are counted as noise by corpus
  /// aggregation (meaningful_rate); the optimizer itself does not gate on it.
  double min_improvement = 0.03;
  MemoryParams memory_params;
  std::map<FailureMode, double> success_thresholds = {
      {FailureMode::Enrollment, 0.60},
      {FailureMode::Safety, 0.90},
      {FailureMode::Efficacy, 0.85},
  };
  bool use_memory = true;  // strategic guidance + exemplars + signatures
  bool use_pool = true;    // pooled augmentations join the candidate space
  CostRates cost_rates;
  std::uint64_t seed = 0;  // echoed into documents; reserved for samplers

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc);
};

enum class Termination { BudgetExhausted, SpaceExhausted, EmptyAnalysis };
std::string to_token(Termination t);

struct IterationReport {
  int t = 0;
  int targets = 0;
  int augmentations = 0;
  int validated = 0;
  SearchStrategy strategy = SearchStrategy::Exhaustive;
  std::uint64_t space_size = 1;
  double r_max = 0.0;
  double r_best_after = 0.0;
  bool incumbent_replaced = false;
  std::vector<CandidateResult> explored;
  int unscorable = 0;
  std::vector<RewardRecord> rewards;
  std::vector<std::string> pool_added_ids;
  std::optional<double> positive_p75;
  std::vector<std::string> notes;
};

struct CostReport {
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::int64_t provider_calls = 0;
  std::int64_t oracle_calls = 0;  // cache misses plus the baseline score
  double estimated_currency = 0.0;
};

struct OptimizationResult {
  TrialProtocol original;
  TrialProtocol best;
  FailureMode mode = FailureMode::Enrollment;
  double p0 = 0.0;
  double p_star = 0.0;
  double delta_p = 0.0;
  double threshold = 0.0;
  bool threshold_achieved = false;
  Termination termination = Termination::BudgetExhausted;
  std::vector<double> r_best_trajectory;  // after each completed iteration
  std::vector<IterationReport> iterations;
  CostReport cost;
  std::vector<PromptLogEntry> prompt_log;

  /// Canonical result document: deterministic key order, no timestamps.
  nlohmann::json to_json(const RunConfig& config) const;
};

/// Runs the closed redesign loop on one failed protocol. `global` may be
/// null (memory-off ablation); when set, the run reads guidance at the first
/// iteration and writes back its experience at the end.
OptimizationResult optimize(const TrialProtocol& original, FailureMode mode,
                            OutcomeOracle& oracle,
                            CompletionProvider& provider,
                            const RunConfig& config, GlobalMemory* global,
                            const AgentConfig& agent_config);

struct BatchTrial {
  std::string id;
  TrialProtocol protocol;
  FailureMode mode;
};

struct BatchOutcome {
  std::string id;
  FailureMode mode;
  OptimizationResult result;
};

/// Sequential corpus runs with incremental memory transfer between trials.
/// With parallelism > 1, every trial reads the batch-start memory snapshot
/// and the transfers are merged in input order afterward, so results for a
/// fixed corpus do not depend on scheduling.
std::vector<BatchOutcome> run_batch(const std::vector<BatchTrial>& trials,
                                    OutcomeOracle& oracle,
                                    CompletionProvider& provider,
                                    const RunConfig& config,
                                    GlobalMemory* global,
                                    const AgentConfig& agent_config,
                                    int parallelism = 1);

/// Corpus-level aggregation over finished runs.
nlohmann::json corpus_report(const std::vector<BatchOutcome>& outcomes,
                             const RunConfig& config);

}  // namespace trialmend
