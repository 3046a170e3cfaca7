#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmend/memory.hpp"
#include "trialmend/modification.hpp"
#include "trialmend/oracle.hpp"
#include "trialmend/protocol.hpp"
#include "trialmend/provider.hpp"

namespace trialmend {

/// One planted repair opportunity in a synthetic trial. The repair is
/// scheduled for a specific iteration (priority) and worth a known score
/// weight, so corpus-level outcomes are predictable in closed form.
struct PlannedFix {
  int priority = 1;  // 1-based iteration slot where the fix gets proposed
  ActionType action = ActionType::Delete;
  std::string aspect;
  std::string marker;  // unique token tying protocol text to a scoring rule
  double weight = 0.0;
  int decoys = 0;    // zero-weight sibling variants generated alongside
  bool hint = false; // proposed only when strategic guidance is present
};

struct SyntheticTrial {
  std::string id;
  TrialProtocol protocol;
  FailureMode mode;
  std::vector<PlannedFix> fixes;
  double designed_p0 = 0.0;
  double designed_p_star = 0.0;
  double designed_delta_p = 0.0;
  /// Score gain scheduled for each iteration slot (index 0 = iteration 1).
  std::vector<double> designed_gains;
};

struct SyntheticCorpus {
  std::vector<SyntheticTrial> trials;
  ScoringSpec scoring;  // one spec covers the whole corpus

  nlohmann::json manifest() const;
  void write_dir(const std::string& dir) const;
  static SyntheticCorpus load_dir(const std::string& dir);
};

struct CorpusOptions {
  int n_trials = 20;
  std::uint64_t seed = 7;
  double base = 0.45;
};

/// Trials with 2-3 planted fixes of strictly decreasing weight, scheduled one
/// per iteration, with failure modes assigned round-robin. The designed
/// delta-p is computed by literally applying every fix and scoring the result
/// with the corpus oracle.
SyntheticCorpus make_corpus(const CorpusOptions& options);

/// Corpus where each trial plants two first-iteration fixes: a small one that
/// is always proposed and a large one proposed only when strategic guidance
/// is present in the prompt. `warm_memory` holds the guidance that unlocks
/// the large fix; copy it fresh per condition.
struct AblationCorpus {
  SyntheticCorpus corpus;
  GlobalMemory warm_memory;
};
AblationCorpus make_ablation_corpus(int n_trials = 10,
                                    std::uint64_t seed = 11);

/// A trial whose analysis legitimately concludes nothing should change.
SyntheticTrial make_empty_analysis_trial();

/// Deterministic stand-in for the reasoning provider: answers every pipeline
/// prompt by reading the repair plan embedded in the trial's failure-reason
/// text and locating planted markers in the prompt itself. Output depends
/// only on (prompt, stage), so whole-engine runs replay byte-identically.
class SyntheticAnalystProvider : public CompletionProvider {
 public:
  Completion complete(const std::string& prompt, int max_tokens,
                      const CallMeta& meta) override;
  std::string descriptor() const override { return "synthetic-analyst"; }
};

/// Decorator that records every completion into a playbook (keyed by stage,
/// iteration, and prompt digest) so a live run can later be replayed through
/// ScriptedProvider.
class RecordingProvider : public CompletionProvider {
 public:
  explicit RecordingProvider(CompletionProvider& inner) : inner_(inner) {}

  Completion complete(const std::string& prompt, int max_tokens,
                      const CallMeta& meta) override;
  std::string descriptor() const override { return inner_.descriptor(); }

  const Playbook& recorded() const { return recorded_; }

 private:
  CompletionProvider& inner_;
  Playbook recorded_;
};

/// Shared between the corpus generator and the synthetic analyst so the text
/// proposed at run time is byte-identical to the text the generator scored
/// when computing designed outcomes.
std::string fix_value_text(ActionType action, const std::string& aspect,
                           const std::string& marker);

}  // namespace trialmend
