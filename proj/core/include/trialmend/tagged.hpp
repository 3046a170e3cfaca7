#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "trialmend/modification.hpp"
#include "trialmend/protocol.hpp"

namespace trialmend {

/// Grammars the tolerant tag parser understands. Completions are prose with
/// XML-ish blocks embedded; the parser extracts well-formed instances of the
/// requested schema and ignores everything else.
enum class TagSchema {
  Classification,
  Tradeoff,
  Augmentations,
  DosageAugmentations,
  DesignPivots,
  AdverseEventProfile,
};

/// Per-category scores for one eligibility criterion.
/// Invariant: primary equals the argmax of the four scores, ties broken by
/// declaration order of PatternCategory.
struct ClassificationScores {
  std::optional<AspectRef> aspect;  // from block attributes, when present
  std::array<double, 4> scores{};   // indexed by PatternCategory order
  PatternCategory primary = PatternCategory::ParticipationBarrier;
  std::string reasoning;

  double score(PatternCategory c) const {
    return scores[static_cast<std::size_t>(c)];
  }
};

/// One trade-off verdict for one aspect slot: what to do about it, how sure,
/// and the side effects to expect.
struct TradeoffBlock {
  std::string aspect_name;
  std::optional<int> index;
  std::string net_recommendation;  // KEEP | MODIFY | DELETE | ADD
  std::optional<std::string> impact_level;  // MAJOR | MINOR | NOT_RELATED
  double confidence = 0.0;
  std::string reasoning;
  std::map<std::string, std::string> impacts;  // e.g. enrollment -> "++"
};

struct DosageVariant {
  std::string value;
  std::string rationale;
};

/// Trial-level redesign directions. All fields optional; `fields` holds
/// whichever known tags the completion carried.
struct DesignPivots {
  std::map<std::string, std::string> fields;

  bool empty() const { return fields.empty(); }
  std::string get(const std::string& key) const {
    auto it = fields.find(key);
    return it == fields.end() ? std::string() : it->second;
  }
};

struct ToxicityProfile {
  std::string event;
  std::string grade;
  std::string incidence;
  std::string organ_system;
  std::string priority;
  std::string dose_dependent;
};

struct AdverseEventProfile {
  std::optional<ToxicityProfile> primary_toxicity;
  std::string mechanism_consistency;
  std::string root_cause_hypothesis;
  std::vector<std::string> critical_gaps;
};

/// Output of the mechanism-alignment stage (analysis text plus an optional
/// proposed enrichment criterion).
struct MechanismFindings {
  std::string analysis;
  std::optional<std::string> missing_enrichment_criterion;
};

/// Verdict block emitted by the validation judge.
struct ValidationVerdict {
  ValidationTier tier = ValidationTier::Pending;
  std::string reasoning;
};

// Typed parsers. Each throws NoBlockFound when the text holds no instance of
// the schema, TruncatedBlock when a known tag opens without closing, and
// MalformedNumber for unparseable numerics or scores outside [0, 1].
std::vector<ClassificationScores> parse_classification(const std::string& text);
std::vector<TradeoffBlock> parse_tradeoffs(const std::string& text);
std::vector<std::string> parse_augmentations(const std::string& text);
std::vector<DosageVariant> parse_dosage_augmentations(const std::string& text);
DesignPivots parse_design_pivots(const std::string& text);
AdverseEventProfile parse_adverse_event_profile(const std::string& text);

// Auxiliary single-block parsers used by pipeline stages.
MechanismFindings parse_mechanism(const std::string& text);
ValidationVerdict parse_validation_verdict(const std::string& text);

using TaggedValue =
    std::variant<std::vector<ClassificationScores>, std::vector<TradeoffBlock>,
                 std::vector<std::string>, std::vector<DosageVariant>,
                 DesignPivots, AdverseEventProfile>;

/// Schema-dispatched entry point over the typed parsers above.
TaggedValue parse_tagged(const std::string& text, TagSchema schema);

/// One planned modification lane from a recorded agent-pipeline output
/// document: the slot, the decided action, and the generated variant values.
struct AspectPlan {
  AspectRef target;
  ActionType action = ActionType::Modify;
  std::string original_value;
  std::string strategy;
  double confidence = 0.0;
  std::string impact_level;
  std::vector<std::string> values;
};

struct AgentOutputDocument {
  TrialProtocol trial;
  std::vector<AspectPlan> plans;
};

/// Parses a recorded pipeline-output JSON document ("trial_data" plus
/// "aspect_li" lanes). Used to replay recorded runs and to ingest fixtures.
AgentOutputDocument parse_agent_output(const std::string& json_text);

}  // namespace trialmend
