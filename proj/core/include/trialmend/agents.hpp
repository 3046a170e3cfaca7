#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trialmend/memory.hpp"
#include "trialmend/modification.hpp"
#include "trialmend/prompts.hpp"
#include "trialmend/protocol.hpp"
#include "trialmend/provider.hpp"
#include "trialmend/tagged.hpp"

namespace trialmend {

enum class ImpactLevel { Major, Minor, NotRelated };

std::string to_token(ImpactLevel v);
ImpactLevel impact_level_from_token(const std::string& token);

/// One confirmed place to change the protocol, before any candidate text has
/// been generated for it.
struct ModificationTarget {
  AspectRef target;  // index empty for additions and string aspects
  ActionType action = ActionType::Modify;
  std::string strategy;
  double confidence = 0.0;
  ImpactLevel impact = ImpactLevel::Minor;
  std::optional<PatternCategory> category;  // set for eligibility targets
};

/// Every prompt/completion exchanged with the provider, in call order.
struct PromptLogEntry {
  std::string stage;
  int iteration = 0;
  std::string prompt;
  std::string completion;
};

struct AgentConfig {
  PromptLibrary prompts;
  int max_retries = 2;     // extra attempts after the first failed call
  int token_budget = 2048; // per completion call
  MemoryParams memory_params;
  /// Optional monotone recalibration applied after memory adjustment.
  std::function<double(double)> calibrate;
  /// Optional external evidence for the validation judge. Returns prose to
  /// inject, or empty to leave the prompt unchanged.
  std::function<std::optional<std::string>(const Augmentation&,
                                           const TrialProtocol&)>
      evidence_lookup;
};

/// Number of candidate texts to request for a target, resolved per signature
/// key from global memory.
using GenerationCountFn = std::function<int(const ModificationTarget&)>;

/// The reasoning pipeline around one failed protocol: staged analysis that
/// emits modification targets, candidate-text generation per target, and
/// judge validation. The stage list depends on the failure mode; a stage
/// whose output cannot be parsed after retries is skipped with the previous
/// stage's conclusions retained.
class AgentPipeline {
 public:
  AgentPipeline(CompletionProvider& provider, AgentConfig config);

  /// Receives every prompt/completion issued from now on. Null disables.
  void set_log(std::vector<PromptLogEntry>* log) { log_ = log; }

  /// Receives human-readable notes (skipped stages, dropped targets). Null
  /// disables.
  void set_notes(std::vector<std::string>* notes) { notes_ = notes; }

  /// Staged failure analysis. `loaded.strategic` is injected only when
  /// non-empty (the caller controls first-iteration-only semantics);
  /// `outcomes`/`global_mode` feed confidence adjustment. Returns targets
  /// sorted by adjusted confidence descending; empty means the analysis
  /// found nothing left to change. Throws ProviderFailure when the provider
  /// stays unreachable through retries on a required stage.
  std::vector<ModificationTarget> run_analysis(
      const TrialProtocol& p, FailureMode mode, const LoadedMemory& loaded,
      const std::map<SlotId, SlotOutcome>& outcomes,
      const ModeMemory* global_mode, int iteration);

  /// Candidate texts per target. Deletions become one augmentation directly.
  /// Values matching a banned exemplar are never emitted; candidates start at
  /// the Pending tier. Targets whose generation output stays unparsable are
  /// skipped. Empty result means no target produced any candidate.
  std::vector<Augmentation> run_augment(
      const std::vector<ModificationTarget>& targets, const TrialProtocol& p,
      FailureMode mode, const TacticalExemplars& tactical,
      const GenerationCountFn& count_for, int iteration);

  /// Grades each Pending augmentation via the judge. Provider failure on a
  /// candidate leaves it Pending (fail-closed: excluded downstream); parse
  /// failure likewise. Returns the same augmentations with tiers assigned.
  std::vector<Augmentation> run_validate(std::vector<Augmentation> augs,
                                         const TrialProtocol& p,
                                         int iteration);

 private:
  struct StageOutcome;

  std::optional<Completion> complete_stage(const std::string& stage,
                                           int iteration,
                                           const std::string& prompt,
                                           bool rethrow_provider_failure);

  CompletionProvider& provider_;
  AgentConfig config_;
  std::vector<PromptLogEntry>* log_ = nullptr;
  std::vector<std::string>* notes_ = nullptr;
};

/// Stage sequence for a failure mode, in execution order. Exposed for
/// playbook tooling and conformance checks.
std::vector<std::string> analysis_stages(FailureMode mode);

}  // namespace trialmend
