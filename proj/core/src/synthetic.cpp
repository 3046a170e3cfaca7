#include "trialmend/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "trialmend/errors.hpp"
#include "trialmend/hash.hpp"

namespace trialmend {

namespace {

// ---------------------------------------------------------------------------
// Deterministic RNG helpers (explicit arithmetic; distribution classes are
// implementation-defined and would tie the corpus to one standard library).

double NextReal(std::mt19937_64& rng, double lo, double hi) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + unit * (hi - lo);
}

std::uint64_t NextIndex(std::mt19937_64& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

// ---------------------------------------------------------------------------
// Trial text tables.

constexpr const char* kConditions[] = {
    "Moderate persistent asthma",
    "Chronic plaque psoriasis",
    "Major depressive disorder",
    "Type 2 diabetes mellitus",
    "Advanced non-small cell lung cancer",
    "Rheumatoid arthritis",
};

constexpr const char* kInterventions[] = {
    "AX-217 oral tablet",
    "Belvarotene capsule",
    "CT-109 subcutaneous injection",
    "Dexolimab infusion",
    "EV-44 transdermal patch",
    "Fositinib tablet",
};

constexpr const char* kFillerInclusion[] = {
    "Adults aged 18 to 75 years at screening",
    "Confirmed diagnosis of the study condition for at least 6 months",
    "Able to provide written informed consent",
    "Stable background therapy for 8 weeks before randomization",
    "Body mass index between 18 and 38 kg/m2",
};

constexpr const char* kFillerExclusion[] = {
    "Pregnancy or breastfeeding",
    "Participation in another interventional study within 30 days",
    "Known hypersensitivity to the study drug class",
    "Clinically significant cardiovascular disease within 6 months",
};

std::string PlanItem(const PlannedFix& f) {
  std::string act;
  switch (f.action) {
    case ActionType::Delete: act = "del"; break;
    case ActionType::Modify: act = "mod"; break;
    case ActionType::Add: act = "add"; break;
  }
  char weight[32];
  std::snprintf(weight, sizeof(weight), "%.6f", f.weight);
  return act + "@" + std::to_string(f.priority) + " w=" + weight +
         " marker=" + f.marker + " aspect=" + f.aspect +
         " decoys=" + std::to_string(f.decoys) +
         " hint=" + (f.hint ? std::string("1") : std::string("0"));
}

std::string FlawCriterionText(const std::string& marker, int variant) {
  switch (variant % 4) {
    case 0:
      return "Willing to remain within 25 miles of the study site for the "
             "entire study period [" + marker + "]";
    case 1:
      return "Must complete a 14-day observation run-in with daily clinic "
             "visits before randomization [" + marker + "]";
    case 2:
      return "Agrees to defer all elective medical procedures until study "
             "completion [" + marker + "]";
    default:
      return "Required to abstain from all caffeine for the duration of the "
             "study [" + marker + "]";
  }
}

// ---------------------------------------------------------------------------
// Prompt inspection helpers for the synthetic analyst. Everything the analyst
// knows comes from the rendered prompt text plus the call's stage/iteration.

std::vector<std::string> SplitLines(const std::string& text) {
  std::vector<std::string> out;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

struct PlanFixView {
  std::string act;  // del | mod | add
  int priority = 0;
  double weight = 0.0;
  std::string marker;
  std::string aspect;
  int decoys = 0;
  bool hint = false;
};

std::vector<PlanFixView> ParsePlan(const std::string& prompt) {
  std::vector<PlanFixView> out;
  const std::string kTag = "REVIEW PLAN ::";
  std::size_t at = prompt.find(kTag);
  if (at == std::string::npos) return out;
  std::size_t end = prompt.find('\n', at);
  std::string line = prompt.substr(at + kTag.size(),
                                   end == std::string::npos
                                       ? std::string::npos
                                       : end - at - kTag.size());
  std::istringstream items(line);
  std::string item;
  while (std::getline(items, item, ';')) {
    std::istringstream words(item);
    std::string word;
    PlanFixView fix;
    bool have_head = false;
    while (words >> word) {
      if (!have_head) {
        std::size_t at_pos = word.find('@');
        if (at_pos == std::string::npos) break;
        fix.act = word.substr(0, at_pos);
        fix.priority = std::atoi(word.c_str() + at_pos + 1);
        have_head = true;
      } else if (word.rfind("w=", 0) == 0) {
        fix.weight = std::atof(word.c_str() + 2);
      } else if (word.rfind("marker=", 0) == 0) {
        fix.marker = word.substr(7);
      } else if (word.rfind("aspect=", 0) == 0) {
        fix.aspect = word.substr(7);
      } else if (word.rfind("decoys=", 0) == 0) {
        fix.decoys = std::atoi(word.c_str() + 7);
      } else if (word.rfind("hint=", 0) == 0) {
        fix.hint = word.substr(5) == "1";
      }
    }
    if (have_head && !fix.marker.empty() && !fix.aspect.empty()) {
      out.push_back(std::move(fix));
    }
  }
  return out;
}

/// Numbered items under a "...criteria:" header, as rendered by the pipeline.
std::vector<std::pair<int, std::string>> ListItems(const std::string& prompt,
                                                   const std::string& header) {
  std::vector<std::pair<int, std::string>> out;
  std::vector<std::string> lines = SplitLines(prompt);
  bool in_section = false;
  for (const std::string& line : lines) {
    if (line == header) {
      in_section = true;
      continue;
    }
    if (!in_section) continue;
    // Items look like "  3. text".
    if (line.size() > 4 && line[0] == ' ' && line[1] == ' ' &&
        std::isdigit(static_cast<unsigned char>(line[2]))) {
      std::size_t dot = line.find(". ", 2);
      if (dot == std::string::npos) break;
      int index = std::atoi(line.c_str() + 2);
      out.emplace_back(index, line.substr(dot + 2));
      continue;
    }
    break;  // end of the numbered section
  }
  return out;
}

std::string LineValue(const std::string& prompt, const std::string& prefix) {
  for (const std::string& line : SplitLines(prompt)) {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  return "";
}

std::string HeaderFor(const std::string& aspect) {
  if (aspect == kInclusionCriteria) return "Inclusion criteria:";
  if (aspect == kExclusionCriteria) return "Exclusion criteria:";
  return "";
}

/// Index of the list item containing `marker`, or empty.
std::optional<int> FindMarkerIndex(const std::string& prompt,
                                   const std::string& aspect,
                                   const std::string& marker) {
  for (const auto& [index, text] : ListItems(prompt, HeaderFor(aspect))) {
    if (text.find(marker) != std::string::npos) return index;
  }
  return std::nullopt;
}

bool FixApplied(const std::string& prompt, const PlanFixView& fix) {
  if (fix.act == "del") {
    return !FindMarkerIndex(prompt, fix.aspect, fix.marker).has_value();
  }
  if (fix.aspect == kDosage) {
    return LineValue(prompt, "  Dosage: ").find(fix.marker) !=
           std::string::npos;
  }
  if (fix.aspect == kTargetPrimaryOutcome) {
    return LineValue(prompt, "  Primary outcome: ").find(fix.marker) !=
           std::string::npos;
  }
  // add to a list: applied once any item carries the marker
  return FindMarkerIndex(prompt, fix.aspect, fix.marker).has_value();
}

std::string ModeToken(const std::string& prompt) {
  return LineValue(prompt, "  Failure mode: ");
}

std::string StaticSafetyProfile() {
  return "<adverse_event_profile>\n"
         "<primary_toxicity>\n"
         "<event>Transaminase elevation</event>\n"
         "<grade>3</grade>\n"
         "<incidence>22%</incidence>\n"
         "<organ_system>Liver</organ_system>\n"
         "<priority>HIGH</priority>\n"
         "<dose_dependent>likely</dose_dependent>\n"
         "</primary_toxicity>\n"
         "<mechanism_consistency>UNEXPECTED - the intervention class does "
         "not predict hepatic toxicity.</mechanism_consistency>\n"
         "<root_cause_hypothesis>Cumulative exposure at the current dose "
         "exceeds the tolerable threshold in a subset of "
         "participants.</root_cause_hypothesis>\n"
         "<critical_gaps>\n"
         "</critical_gaps>\n"
         "</adverse_event_profile>";
}

std::string StaticEfficacyProfile() {
  return "<efficacy_gap_profile>The observed effect size fell short of the "
         "powered assumption. The most plausible causes are diluted "
         "enrollment of likely responders and a dosing regimen at the low "
         "end of the exposure-response curve. Endpoint sensitivity appears "
         "adequate.</efficacy_gap_profile>";
}

std::string StaticMechanism() {
  return "<mechanism_analysis>The intervention engages its target as "
         "expected; the failure pattern is better explained by protocol "
         "design than by pharmacology.</mechanism_analysis>";
}

std::string StaticPivots() {
  return "<design_pivots>\n"
         "<trial_type>EFFICACY</trial_type>\n"
         "<endpoint_family>CLINICAL_RESPONSE</endpoint_family>\n"
         "<dose_regimen_direction>UNCHANGED</dose_regimen_direction>\n"
         "<route_change>KEEP_ROUTE</route_change>\n"
         "<sample_size_direction>UNCHANGED</sample_size_direction>\n"
         "<design_structure>PARALLEL_GROUP</design_structure>\n"
         "<summary>The design frame can stay; the deficiencies are "
         "criterion-level.</summary>\n"
         "</design_pivots>";
}

std::string CategoryTokenFor(const std::string& mode_token) {
  if (mode_token == "efficacy") return "SELECTION_CRITERION";
  return "PARTICIPATION_BARRIER";
}

std::string ClassificationBlock(const std::string& aspect, int index,
                                const std::string& category) {
  std::string scores;
  if (category == "PARTICIPATION_BARRIER") {
    scores =
        "<participation_barrier_score>0.92</participation_barrier_score>\n"
        "<safety_exclusion_score>0.05</safety_exclusion_score>\n"
        "<selection_score>0.20</selection_score>\n"
        "<enrichment_score>0.10</enrichment_score>\n";
  } else {
    scores =
        "<participation_barrier_score>0.15</participation_barrier_score>\n"
        "<safety_exclusion_score>0.05</safety_exclusion_score>\n"
        "<selection_score>0.88</selection_score>\n"
        "<enrichment_score>0.25</enrichment_score>\n";
  }
  return "<classification aspect_name=\"" + aspect + "\" index=\"" +
         std::to_string(index) + "\">\n" + scores + "<primary_category>" +
         category + "</primary_category>\n"
         "<reasoning>Burdensome requirement without medical justification "
         "for this intervention.</reasoning>\n"
         "</classification>\n";
}

}  // namespace

std::string fix_value_text(ActionType action, const std::string& aspect,
                           const std::string& marker) {
  if (aspect == kDosage) {
    return "Revised regimen [" + marker +
           "]: reduced per-dose amount on an unchanged schedule";
  }
  if (aspect == kTargetPrimaryOutcome) {
    return "Clinical response rate at week 12 [" + marker +
           "], assessed by blinded central review";
  }
  if (action == ActionType::Add && aspect == kExclusionCriteria) {
    return "Baseline hepatic enzymes above twice the upper limit of normal ["
           + marker + "]";
  }
  if (action == ActionType::Add) {
    return "Documented biomarker-positive status at screening [" + marker +
           "]";
  }
  return "Rewritten criterion [" + marker + "]";
}

Completion SyntheticAnalystProvider::complete(const std::string& prompt,
                                              int /*max_tokens*/,
                                              const CallMeta& meta) {
  std::string text;
  const std::vector<PlanFixView> plan = ParsePlan(prompt);
  const bool guided = prompt.find("<strategic_guidance>") != std::string::npos;

  auto actionable = [&](const PlanFixView& f) {
    if (f.priority > meta.iteration) return false;
    if (f.hint && !guided) return false;
    return !FixApplied(prompt, f);
  };

  if (meta.stage == "analysis.profile") {
    const std::string mode = ModeToken(prompt);
    text = mode == "safety" ? StaticSafetyProfile() : StaticEfficacyProfile();
  } else if (meta.stage == "analysis.classify") {
    const std::string mode = ModeToken(prompt);
    std::string blocks;
    for (const PlanFixView& f : plan) {
      if (f.act != "del") continue;
      std::optional<int> index = FindMarkerIndex(prompt, f.aspect, f.marker);
      if (!index) continue;
      blocks += ClassificationBlock(f.aspect, *index, CategoryTokenFor(mode));
    }
    text = "<classifications>\n" + blocks + "</classifications>";
  } else if (meta.stage == "analysis.mechanism") {
    text = StaticMechanism();
  } else if (meta.stage == "analysis.pivots") {
    text = StaticPivots();
  } else if (meta.stage == "analysis.tradeoff") {
    std::string blocks;
    for (const PlanFixView& f : plan) {
      if (!actionable(f)) continue;
      const std::string apply_tag =
          "APPLY " + f.marker + " decoys=" + std::to_string(f.decoys);
      if (f.act == "del") {
        std::optional<int> index = FindMarkerIndex(prompt, f.aspect, f.marker);
        if (!index) continue;
        blocks += "<tradeoff aspect_name=\"" + f.aspect + "\" index=\"" +
                  std::to_string(*index) + "\">\n"
                  "<enrollment_impact>++</enrollment_impact>\n"
                  "<efficacy_signal_impact>0</efficacy_signal_impact>\n"
                  "<safety_risk_impact>0</safety_risk_impact>\n"
                  "<mechanism_alignment>NEUTRAL</mechanism_alignment>\n"
                  "<net_recommendation>DELETE</net_recommendation>\n"
                  "<confidence>0.90</confidence>\n"
                  "<reasoning>Remove the burdensome requirement; it "
                  "suppresses accrual without protecting anyone.</reasoning>\n"
                  "</tradeoff>\n";
      } else if (f.aspect == kDosage) {
        blocks += "<dosage_tradeoff>\n"
                  "<recommendation>MODIFY</recommendation>\n"
                  "<efficacy_signal>+</efficacy_signal>\n"
                  "<enrollment>0</enrollment>\n"
                  "<safety>+</safety>\n"
                  "<mechanism_alignment>ALIGNED</mechanism_alignment>\n"
                  "<confidence>0.85</confidence>\n"
                  "<reasoning>" + apply_tag + ". Revise the regimen to fit "
                  "the observed exposure-response data. FEASIBILITY: "
                  "standard titration.</reasoning>\n"
                  "</dosage_tradeoff>\n";
      } else if (f.act == "mod" && f.aspect == kTargetPrimaryOutcome) {
        blocks += "<tradeoff aspect_name=\"" + f.aspect + "\">\n"
                  "<enrollment_impact>0</enrollment_impact>\n"
                  "<efficacy_signal_impact>++</efficacy_signal_impact>\n"
                  "<safety_risk_impact>0</safety_risk_impact>\n"
                  "<mechanism_alignment>ALIGNED</mechanism_alignment>\n"
                  "<net_recommendation>MODIFY</net_recommendation>\n"
                  "<confidence>0.80</confidence>\n"
                  "<reasoning>" + apply_tag + ". Replace the endpoint with "
                  "one the redesigned trial can carry.</reasoning>\n"
                  "</tradeoff>\n";
      } else if (f.act == "add") {
        blocks += "<tradeoff aspect_name=\"" + f.aspect + "\">\n"
                  "<enrollment_impact>0</enrollment_impact>\n"
                  "<efficacy_signal_impact>+</efficacy_signal_impact>\n"
                  "<safety_risk_impact>+</safety_risk_impact>\n"
                  "<mechanism_alignment>ALIGNED</mechanism_alignment>\n"
                  "<net_recommendation>ADD</net_recommendation>\n"
                  "<confidence>0.80</confidence>\n"
                  "<reasoning>" + apply_tag + ". Add the missing criterion "
                  "identified by the failure analysis.</reasoning>\n"
                  "</tradeoff>\n";
      }
    }
    text = "<tradeoffs>\n" + blocks + "</tradeoffs>";
  } else if (meta.stage == "analysis.prioritize") {
    text = "1. Apply the scheduled change first; it carries the largest "
           "expected gain.";
  } else if (meta.stage.rfind("augment:", 0) == 0) {
    const std::string strategy = LineValue(prompt, "Strategy: ");
    const std::string kApply = "APPLY ";
    std::string marker;
    int decoys = 0;
    std::size_t at = strategy.find(kApply);
    if (at != std::string::npos) {
      std::istringstream rest(strategy.substr(at + kApply.size()));
      rest >> marker;
      std::string word;
      while (rest >> word) {
        if (word.rfind("decoys=", 0) == 0) {
          decoys = std::atoi(word.c_str() + 7);
          break;
        }
      }
      // The marker token may carry trailing punctuation from prose.
      while (!marker.empty() &&
             !std::isalnum(static_cast<unsigned char>(marker.back())) &&
             marker.back() != '-') {
        marker.pop_back();
      }
    }

    const std::string slot = meta.stage.substr(std::string("augment:").size());
    const bool dosage = slot.rfind(kDosage, 0) == 0;
    std::string aspect(kInclusionCriteria);
    if (dosage) {
      aspect = kDosage;
    } else if (slot.rfind(kTargetPrimaryOutcome, 0) == 0) {
      aspect = kTargetPrimaryOutcome;
    } else if (slot.rfind(kExclusionCriteria, 0) == 0) {
      aspect = kExclusionCriteria;
    }
    ActionType action = LineValue(prompt, "Action: ") == "ADD"
                            ? ActionType::Add
                            : ActionType::Modify;
    if (aspect == kDosage || aspect == kTargetPrimaryOutcome) {
      action = ActionType::Modify;
    }

    std::vector<std::string> values;
    if (!marker.empty()) {
      values.push_back(fix_value_text(action, aspect, marker));
    }
    for (int j = 0; j < decoys; ++j) {
      values.push_back("Alternative draft " + std::to_string(j + 1) +
                       " retained for comparison only");
    }
    if (values.empty()) {
      values.push_back("Neutral rewording with identical operational intent");
    }

    text = "<augmentations>\n";
    for (const std::string& v : values) {
      if (dosage) {
        text += "<augmentation>\n<dosage_modification>" + v +
                "</dosage_modification>\n<rationale>Matches the revision "
                "strategy confirmed by the review.</rationale>\n"
                "</augmentation>\n";
      } else {
        text += "<augmentation>" + v + "</augmentation>\n";
      }
    }
    text += "</augmentations>";
  } else if (meta.stage == "validate") {
    text = "<validation>\n<tier>GOOD</tier>\n<reasoning>Consistent with the "
           "documented failure mode and medically plausible.</reasoning>\n"
           "</validation>";
  } else if (meta.stage == "transfer.summarize") {
    text = "Reuse the modification patterns that carried confirmed reward.";
  } else {
    text = "(no opinion)";
  }

  Completion c;
  c.text = text;
  c.tokens_in = static_cast<std::int64_t>((prompt.size() + 3) / 4);
  c.tokens_out = static_cast<std::int64_t>((text.size() + 3) / 4);
  return c;
}

Completion RecordingProvider::complete(const std::string& prompt,
                                       int max_tokens, const CallMeta& meta) {
  Completion c = inner_.complete(prompt, max_tokens, meta);
  PlaybookEntry entry;
  entry.stage = meta.stage;
  entry.iteration = meta.iteration;
  entry.digest = short_digest(prompt);
  entry.text = c.text;
  recorded_.add(std::move(entry));
  return c;
}

// ---------------------------------------------------------------------------
// Corpus generation.

namespace {

struct FixTemplate {
  ActionType action;
  const char* aspect;
};

// Aspect/action patterns cycled across trials; priorities are 1-based slots.
const std::vector<std::vector<FixTemplate>>& PatternTable() {
  static const std::vector<std::vector<FixTemplate>> kPatterns = {
      {{ActionType::Delete, "eligibility/inclusion_criteria"},
       {ActionType::Modify, "dosage"},
       {ActionType::Add, "eligibility/inclusion_criteria"}},
      {{ActionType::Delete, "eligibility/exclusion_criteria"},
       {ActionType::Modify, "target_primary_outcome"}},
      {{ActionType::Delete, "eligibility/inclusion_criteria"},
       {ActionType::Add, "eligibility/exclusion_criteria"},
       {ActionType::Modify, "dosage"}},
      {{ActionType::Delete, "eligibility/inclusion_criteria"},
       {ActionType::Modify, "dosage"}},
      {{ActionType::Delete, "eligibility/exclusion_criteria"},
       {ActionType::Add, "eligibility/inclusion_criteria"},
       {ActionType::Modify, "target_primary_outcome"}},
      {{ActionType::Delete, "eligibility/inclusion_criteria"},
       {ActionType::Modify, "target_primary_outcome"}},
  };
  return kPatterns;
}

std::string TrialTag(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "T%02d", i);
  return buf;
}

TrialProtocol BaseProtocol(int i, FailureMode mode, std::mt19937_64& rng) {
  TrialProtocol p;
  char nct[16];
  std::snprintf(nct, sizeof(nct), "NCT9%07d", i * 137 + 11);
  p.nct_id = nct;
  p.phase = mode == FailureMode::Enrollment ? Phase::Phase3 : Phase::Phase2;
  p.condition = kConditions[NextIndex(rng, std::size(kConditions))];
  p.intervention_name =
      kInterventions[NextIndex(rng, std::size(kInterventions))];
  p.failure_reason = mode;
  switch (mode) {
    case FailureMode::Enrollment:
      p.extras["why_stopped"] =
          "Enrollment stalled at a fraction of target after 14 months.";
      p.adverse_events = "No treatment-related serious adverse events.";
      break;
    case FailureMode::Safety:
      p.extras["why_stopped"] =
          "Stopped early after the toxicity boundary was crossed.";
      p.adverse_events =
          "Grade 3 transaminase elevation in 22% of treated participants.";
      break;
    case FailureMode::Efficacy:
      p.extras["why_stopped"] =
          "Primary endpoint missed; observed effect below the powered "
          "assumption.";
      p.adverse_events = "Mild headache and nausea, balanced across arms.";
      break;
  }
  p.inclusion_criteria.assign(std::begin(kFillerInclusion),
                              std::begin(kFillerInclusion) + 3);
  p.exclusion_criteria.assign(std::begin(kFillerExclusion),
                              std::begin(kFillerExclusion) + 3);
  p.dosage = "100mg oral once daily for 56 days";
  p.target_primary_outcome =
      "Change in validated symptom score from baseline to week 8";
  return p;
}

void PlantFixes(SyntheticTrial& trial, ScoringSpec& scoring,
                std::mt19937_64& rng) {
  int flaw_variant = 0;
  for (PlannedFix& f : trial.fixes) {
    if (f.action == ActionType::Delete) {
      // The deletable flaw lives in the protocol text and scores negative
      // while present.
      std::string text = FlawCriterionText(f.marker, flaw_variant++);
      auto& list = trial.protocol.criteria(f.aspect);
      std::size_t at = NextIndex(rng, list.size() + 1);
      list.insert(list.begin() + static_cast<std::ptrdiff_t>(at),
                  std::move(text));
      scoring.rules.push_back({f.marker, false, {f.aspect}, -f.weight});
    } else {
      // The repair text does not exist yet; its rule rewards the marker the
      // generated candidate will carry.
      scoring.rules.push_back({f.marker, false, {f.aspect}, f.weight});
    }
  }
  std::string plan;
  for (const PlannedFix& f : trial.fixes) {
    if (!plan.empty()) plan += "; ";
    plan += PlanItem(f);
  }
  trial.protocol.extras["why_stopped"] =
      trial.protocol.extras["why_stopped"].get<std::string>() +
      " REVIEW PLAN :: " + plan;
}

/// Applies fixes with priority <= up_to (0 = none) and returns the resulting
/// protocol, mirroring what the engine converges to at that iteration.
TrialProtocol ApplyFixes(const SyntheticTrial& trial, int up_to) {
  TrialProtocol p = trial.protocol;
  for (const PlannedFix& f : trial.fixes) {
    if (f.priority > up_to) continue;
    if (f.action == ActionType::Delete) {
      auto& list = p.criteria(f.aspect);
      list.erase(std::remove_if(list.begin(), list.end(),
                                [&f](const std::string& text) {
                                  return text.find(f.marker) !=
                                         std::string::npos;
                                }),
                 list.end());
    } else if (f.action == ActionType::Add) {
      p.criteria(f.aspect).push_back(
          fix_value_text(f.action, f.aspect, f.marker));
    } else if (f.aspect == kDosage) {
      p.dosage = fix_value_text(f.action, f.aspect, f.marker);
    } else if (f.aspect == kTargetPrimaryOutcome) {
      p.target_primary_outcome = fix_value_text(f.action, f.aspect, f.marker);
    }
  }
  return p;
}

void ComputeDesigned(SyntheticTrial& trial, const ScoringSpec& scoring) {
  ReferenceOracle oracle(scoring);
  int max_priority = 0;
  for (const PlannedFix& f : trial.fixes) {
    max_priority = std::max(max_priority, f.priority);
  }
  trial.designed_p0 = oracle.score(trial.protocol);
  double prev = trial.designed_p0;
  trial.designed_gains.clear();
  for (int k = 1; k <= max_priority; ++k) {
    double score = oracle.score(ApplyFixes(trial, k));
    trial.designed_gains.push_back(score - prev);
    prev = score;
  }
  trial.designed_p_star = prev;
  trial.designed_delta_p = trial.designed_p_star - trial.designed_p0;
}

}  // namespace

SyntheticCorpus make_corpus(const CorpusOptions& options) {
  SyntheticCorpus corpus;
  corpus.scoring.base = options.base;
  std::mt19937_64 rng(options.seed);

  const auto& patterns = PatternTable();
  const FailureMode kModes[] = {FailureMode::Enrollment, FailureMode::Safety,
                                FailureMode::Efficacy};

  for (int i = 0; i < options.n_trials; ++i) {
    SyntheticTrial trial;
    const std::string tag = TrialTag(i);
    trial.id = "trial-" + tag;
    trial.mode = kModes[i % 3];
    trial.protocol = BaseProtocol(i, trial.mode, rng);

    const std::vector<FixTemplate>& pattern = patterns[i % patterns.size()];
    // Weights strictly decrease with priority so early iterations carry the
    // larger gains.
    const double bands[][2] = {{0.090, 0.120}, {0.045, 0.060}, {0.020, 0.030}};
    for (std::size_t k = 0; k < pattern.size(); ++k) {
      PlannedFix f;
      f.priority = static_cast<int>(k) + 1;
      f.action = pattern[k].action;
      f.aspect = pattern[k].aspect;
      f.weight = NextReal(rng, bands[k][0], bands[k][1]);
      f.marker = (f.action == ActionType::Delete ? "FLAW-" : "FIX-") + tag +
                 "-" + std::to_string(k + 1);
      f.decoys =
          (f.action == ActionType::Modify && i % 2 == 0) ? 2 : 0;
      trial.fixes.push_back(std::move(f));
    }

    PlantFixes(trial, corpus.scoring, rng);
    corpus.trials.push_back(std::move(trial));
  }

  for (SyntheticTrial& trial : corpus.trials) {
    ComputeDesigned(trial, corpus.scoring);
  }
  return corpus;
}

AblationCorpus make_ablation_corpus(int n_trials, std::uint64_t seed) {
  AblationCorpus out;
  out.corpus.scoring.base = 0.45;
  std::mt19937_64 rng(seed);

  const FailureMode kModes[] = {FailureMode::Enrollment, FailureMode::Safety,
                                FailureMode::Efficacy};
  for (int i = 0; i < n_trials; ++i) {
    SyntheticTrial trial;
    const std::string tag = "A" + TrialTag(i).substr(1);
    trial.id = "ablation-" + tag;
    trial.mode = kModes[i % 3];
    trial.protocol = BaseProtocol(100 + i, trial.mode, rng);

    // Large fix: unlocked only by strategic guidance in the prompt.
    PlannedFix big;
    big.priority = 1;
    big.action = ActionType::Delete;
    big.aspect = std::string(kInclusionCriteria);
    big.weight = NextReal(rng, 0.100, 0.120);
    big.marker = "FLAW-" + tag + "-1";
    big.hint = true;
    trial.fixes.push_back(big);

    // Small fix: always proposed.
    PlannedFix small;
    small.priority = 1;
    small.action = ActionType::Modify;
    small.aspect = std::string(kDosage);
    small.weight = NextReal(rng, 0.030, 0.040);
    small.marker = "FIX-" + tag + "-2";
    trial.fixes.push_back(small);

    PlantFixes(trial, out.corpus.scoring, rng);
    out.corpus.trials.push_back(std::move(trial));
  }

  for (SyntheticTrial& trial : out.corpus.trials) {
    ComputeDesigned(trial, out.corpus.scoring);
  }

  // Guidance content is advisory prose; its presence in first-iteration
  // prompts is what unlocks the hint-gated fixes.
  for (FailureMode mode : kModes) {
    ModeMemory& mem = out.warm_memory.mode(mode);
    mem.runs = 4;
    GuidanceEntry g;
    g.key = "PARTICIPATION_BARRIER";
    g.action = "DELETE";
    g.recommendation =
        "Prioritize removing burdensome logistical criteria; confirmed "
        "reward uplift across earlier redesigns";
    g.support = 4;
    g.mean_reward = 0.04;
    mem.strategic.push_back(std::move(g));
  }
  return out;
}

SyntheticTrial make_empty_analysis_trial() {
  SyntheticTrial trial;
  trial.id = "trial-sound";
  trial.mode = FailureMode::Enrollment;
  std::mt19937_64 rng(99);
  trial.protocol = BaseProtocol(999, trial.mode, rng);
  // No review plan: the analyst finds nothing to change.
  trial.designed_p0 = 0.45;
  trial.designed_p_star = 0.45;
  trial.designed_delta_p = 0.0;
  return trial;
}

nlohmann::json SyntheticCorpus::manifest() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const SyntheticTrial& t : trials) {
    rows.push_back({{"id", t.id},
                    {"nct_id", t.protocol.nct_id},
                    {"failure_mode", to_token(t.mode)},
                    {"designed_p0", t.designed_p0},
                    {"designed_p_star", t.designed_p_star},
                    {"designed_delta_p", t.designed_delta_p},
                    {"designed_gains", t.designed_gains},
                    {"protocol_file", "trials/" + t.id + ".json"}});
  }
  return nlohmann::json{{"base", scoring.base}, {"trials", std::move(rows)}};
}

void SyntheticCorpus::write_dir(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "trials");
  {
    std::ofstream out(fs::path(dir) / "manifest.json",
                      std::ios::binary | std::ios::trunc);
    out << manifest().dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "scoring.json",
                      std::ios::binary | std::ios::trunc);
    out << scoring.to_json().dump(2) << '\n';
  }
  for (const SyntheticTrial& t : trials) {
    std::ofstream out(fs::path(dir) / "trials" / (t.id + ".json"),
                      std::ios::binary | std::ios::trunc);
    out << protocol_to_json(t.protocol).dump(2) << '\n';
  }
}

SyntheticCorpus SyntheticCorpus::load_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  SyntheticCorpus corpus;
  std::ifstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!mf) throw MalformedDocument("cannot read corpus manifest in " + dir);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedDocument(std::string("corpus manifest: ") + e.what());
  }
  corpus.scoring = ScoringSpec::load_file((fs::path(dir) / "scoring.json").string());
  for (const nlohmann::json& row : manifest.at("trials")) {
    SyntheticTrial t;
    t.id = row.at("id").get<std::string>();
    t.mode = failure_mode_from_token(row.at("failure_mode").get<std::string>());
    t.designed_p0 = row.value("designed_p0", 0.0);
    t.designed_p_star = row.value("designed_p_star", 0.0);
    t.designed_delta_p = row.value("designed_delta_p", 0.0);
    if (row.contains("designed_gains")) {
      t.designed_gains = row["designed_gains"].get<std::vector<double>>();
    }
    t.protocol = load_protocol_file(
        (fs::path(dir) / row.at("protocol_file").get<std::string>()).string());
    corpus.trials.push_back(std::move(t));
  }
  return corpus;
}

}  // namespace trialmend
