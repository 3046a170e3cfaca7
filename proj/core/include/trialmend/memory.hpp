#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmend/modification.hpp"
#include "trialmend/protocol.hpp"
#include "trialmend/reward.hpp"

namespace trialmend {

class CompletionProvider;
class PromptLibrary;

/// Where exemplars and outcome history attach: a list criterion by index, or
/// the whole aspect (string aspects and additions share the index-free slot).
struct SlotId {
  std::string aspect_name;
  std::optional<int> index;

  auto operator<=>(const SlotId&) const = default;
  std::string to_string() const;
};

SlotId slot_id_of(const Augmentation& a);

/// Graded example texts accumulated per slot. Values move between tiers as
/// later iterations re-grade them; Banned is sticky and never displaced.
struct TacticalExemplars {
  std::map<SlotId, std::map<ValidationTier, std::vector<std::string>>> slots;

  bool empty() const { return slots.empty(); }
  const std::vector<std::string>* tier(const SlotId& slot,
                                       ValidationTier v) const;
  bool is_banned(const SlotId& slot, const std::string& value) const;
};

/// Aggregate attribution history for one slot within a run.
struct SlotOutcome {
  int attributed = 0;  // records that carried a defined reward
  int positive = 0;    // of those, strictly positive
  double best_r = 0.0;
};

struct ActionStats {
  std::int64_t n = 0;
  std::int64_t n_pos = 0;

  double success_rate() const {
    return n > 0 ? static_cast<double>(n_pos) / static_cast<double>(n) : 0.0;
  }
};

/// Streaming reward statistics for one signature key (a pattern category for
/// eligibility changes, the aspect name otherwise), extended one reward at a
/// time so transfers never need the raw history.
struct CategorySignature {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations from the running mean
  std::int64_t n_pos = 0;
  std::map<std::string, ActionStats> actions;  // keyed by action token

  void observe(double r, const std::string& action_token);
  double variance() const;  // population variance, 0 when empty
  double success_rate() const;

  nlohmann::json to_json() const;
  static CategorySignature from_json(const nlohmann::json& doc);
};

struct GuidanceEntry {
  std::string key;     // signature key the pattern was observed on
  std::string action;  // action token with the best mean reward
  std::string recommendation;
  std::int64_t support = 0;
  double mean_reward = 0.0;
};

/// High-reward augmentations carried across runs and re-proposed as ready-made
/// candidate options on matching protocols.
struct PoolEntry {
  Augmentation aug;  // carries original_value for index re-resolution
  double reward = 0.0;
  int minted_iteration = 0;
};

struct ModeMemory {
  std::int64_t runs = 0;
  std::vector<GuidanceEntry> strategic;
  std::map<std::string, CategorySignature> signatures;
  std::vector<PoolEntry> pool;
};

/// Persistent cross-run memory, organized per failure mode. Saves are
/// write-temp-then-rename so a crash never leaves a truncated file.
class GlobalMemory {
 public:
  static constexpr int kSchemaVersion = 1;

  ModeMemory& mode(FailureMode y) { return modes_[y]; }
  const ModeMemory* mode_if_present(FailureMode y) const;

  nlohmann::json to_json() const;
  static GlobalMemory from_json(const nlohmann::json& doc);
  static GlobalMemory load_file(const std::string& path);
  void save_file(const std::string& path) const;

 private:
  std::map<FailureMode, ModeMemory> modes_;
};

/// Everything distilled from one iteration's attributed rewards.
struct DistillResult {
  std::vector<PoolEntry> pool_additions;
  std::vector<GuidanceEntry> strategic;
  TacticalExemplars tactical;
  std::optional<double> positive_p75;  // gate actually applied, for tracing
};

/// One completed iteration as the run's local memory stores it.
struct IterationExperience {
  int t = 0;
  std::vector<RewardRecord> rewards;
  std::map<std::string, Augmentation> augs;  // explored universe by id
  DistillResult distilled;
};

/// Per-run memory: iteration experiences plus judge-banned augmentations.
class LocalMemory {
 public:
  void record_iteration(IterationExperience rec);
  void record_banned(const Augmentation& aug);

  const std::vector<IterationExperience>& iterations() const {
    return iterations_;
  }
  const std::vector<Augmentation>& banned() const { return banned_; }
  bool empty() const { return iterations_.empty() && banned_.empty(); }

  /// Merged exemplars across all iterations (later grades displace earlier
  /// ones for the same value) with banned values pinned to the Banned tier.
  TacticalExemplars accumulated_tactical() const;

  /// Attribution history per slot across all iterations.
  std::map<SlotId, SlotOutcome> slot_outcomes() const;

 private:
  std::vector<IterationExperience> iterations_;
  std::vector<Augmentation> banned_;
};

struct MemoryParams {
  double diversification_penalty = 0.2;
  double exploration_bonus = 0.1;
  int gen_base = 3;
  double gen_var_ref = 0.01;
  int gen_max = 8;
};

/// Nearest-rank percentile (q in (0,1]) of `values`; NaN-free, copies and
/// sorts. Returns empty when `values` is empty.
std::optional<double> percentile_nearest_rank(std::vector<double> values,
                                              double q);

/// Signature key an augmentation's rewards aggregate under.
std::string signature_key(const Augmentation& a);

/// Turns one iteration's attributed rewards into pool additions (strictly
/// positive and at or above the 75th percentile of the iteration's positive
/// rewards), per-key strategic entries, and tiered exemplars. Judge-banned
/// augmentations enter the exemplars at the Banned tier.
DistillResult distill(const std::vector<RewardRecord>& rewards,
                      const std::map<std::string, Augmentation>& augs,
                      const std::vector<Augmentation>& banned_this_iteration,
                      int iteration);

/// Per-run generation count for a signature key: base, scaled up for low
/// success rate and high reward variance, clamped to [1, gen_max].
int adaptive_generation_count(const CategorySignature* sig,
                              const MemoryParams& params);

/// Confidence adjustment policy, applied to every proposed target before
/// ranking. In order: a slot whose attributed changes all failed drops to 0;
/// a slot with a confirmed success is damped by the diversification penalty;
/// an unexplored slot gains the exploration bonus (capped at 1). When a
/// global signature exists for the target's key, the action's historical
/// success rate multiplies in. Result is clamped to [0, 1].
double adjusted_confidence(double confidence, const SlotOutcome* outcome,
                           const CategorySignature* sig,
                           const std::string& action_token,
                           const MemoryParams& params);

/// Merges a finished run into global memory: updates signatures from the
/// final iteration's rewards, appends the run's pool additions, and appends
/// strategic guidance from the final iteration's top-quartile patterns. When
/// `summarizer` is given it rewrites the guidance text (one call per run);
/// otherwise a deterministic template renders it.
struct PromptLogEntry;  // defined in agents.hpp
void transfer(GlobalMemory& global, FailureMode mode, const LocalMemory& local,
              CompletionProvider* summarizer, const PromptLibrary* prompts,
              std::vector<PromptLogEntry>* log);

/// Memory injected into a new iteration: strategic guidance only on the first
/// iteration (from global), tactical exemplars accumulated within the run.
struct LoadedMemory {
  std::vector<GuidanceEntry> strategic;
  TacticalExemplars tactical;
};
LoadedMemory load_memory(const GlobalMemory* global, const LocalMemory& local,
                         FailureMode mode, int t);

/// Rendered <strategic_guidance> block, or "" when there is no guidance.
std::string render_guidance_section(const std::vector<GuidanceEntry>& entries);

/// Rendered <few_shot_examples> block for one slot, or "" when the slot has
/// no exemplars.
std::string render_few_shot(const TacticalExemplars& tactical,
                            const SlotId& slot);

}  // namespace trialmend
