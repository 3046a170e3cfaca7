#include "trialmend/agents.hpp"

#include <algorithm>
#include <sstream>

#include "trialmend/errors.hpp"

namespace trialmend {

namespace {

constexpr double kProvisionalDosageConfidence = 0.5;
constexpr double kProfileGapConfidence = 0.7;
constexpr double kMechanismAddConfidence = 0.75;
constexpr double kPivotOutcomeConfidence = 0.7;
constexpr double kMajorImpactCut = 0.8;

std::string NumberedList(const std::vector<std::string>& items) {
  if (items.empty()) return "  (none)\n";
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += "  " + std::to_string(i) + ". " + items[i] + "\n";
  }
  return out;
}

/// The structured field records only the failure mode; sponsors often attach
/// a free-text account under "why_stopped", which makes a far better prompt.
std::string FailureNarrative(const TrialProtocol& p) {
  if (p.extras.contains("why_stopped") && p.extras["why_stopped"].is_string()) {
    return p.extras["why_stopped"].get<std::string>();
  }
  return "Trial registered as a " + to_token(p.failure_reason) + " failure.";
}

std::map<std::string, std::string> ProtocolVars(const TrialProtocol& p,
                                                FailureMode mode) {
  return {
      {"nct_id", p.nct_id},
      {"phase", to_token(p.phase)},
      {"condition", p.condition},
      {"intervention", p.intervention_name},
      {"failure_mode", to_token(mode)},
      {"failure_reason", FailureNarrative(p)},
      {"adverse_events", p.adverse_events},
      {"dosage", p.dosage},
      {"primary_outcome", p.target_primary_outcome},
      {"inclusion_criteria", NumberedList(p.inclusion_criteria)},
      {"exclusion_criteria", NumberedList(p.exclusion_criteria)},
  };
}

ImpactLevel ImpactFromConfidence(double confidence) {
  return confidence >= kMajorImpactCut ? ImpactLevel::Major
                                       : ImpactLevel::Minor;
}

std::string DescribeTarget(const ModificationTarget& t) {
  std::string out = to_token(t.action) + " " + to_string(t.target);
  out += " (confidence " + std::to_string(t.confidence).substr(0, 4) + "): ";
  out += t.strategy;
  return out;
}

PatternCategory DefaultCategory(FailureMode mode, ActionType action) {
  switch (mode) {
    case FailureMode::Enrollment:
      return action == ActionType::Delete ? PatternCategory::ParticipationBarrier
                                          : PatternCategory::EnrichmentCriterion;
    case FailureMode::Safety:
      return action == ActionType::Delete ? PatternCategory::ParticipationBarrier
                                          : PatternCategory::SafetyExclusion;
    case FailureMode::Efficacy:
      return action == ActionType::Delete ? PatternCategory::SelectionCriterion
                                          : PatternCategory::EnrichmentCriterion;
  }
  return PatternCategory::SelectionCriterion;
}

struct TargetKey {
  std::string aspect;
  int index;  // -1 when absent
  ActionType action;

  auto operator<=>(const TargetKey&) const = default;
};

TargetKey KeyOf(const ModificationTarget& t) {
  return {t.target.aspect_name, t.target.index.value_or(-1), t.action};
}

}  // namespace

std::string to_token(ImpactLevel v) {
  switch (v) {
    case ImpactLevel::Major: return "MAJOR";
    case ImpactLevel::Minor: return "MINOR";
    case ImpactLevel::NotRelated: return "NOT_RELATED";
  }
  throw BadEnum("impact_level", "?");
}

ImpactLevel impact_level_from_token(const std::string& token) {
  std::string up;
  for (char c : token) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "MAJOR") return ImpactLevel::Major;
  if (up == "MINOR") return ImpactLevel::Minor;
  if (up == "NOT_RELATED") return ImpactLevel::NotRelated;
  throw BadEnum("impact_level", token);
}

std::vector<std::string> analysis_stages(FailureMode mode) {
  switch (mode) {
    case FailureMode::Enrollment:
      return {"analysis.classify", "analysis.mechanism", "analysis.tradeoff",
              "analysis.prioritize"};
    case FailureMode::Safety:
      return {"analysis.profile", "analysis.classify", "analysis.pivots",
              "analysis.tradeoff", "analysis.prioritize"};
    case FailureMode::Efficacy:
      return {"analysis.profile", "analysis.classify", "analysis.mechanism",
              "analysis.pivots", "analysis.tradeoff", "analysis.prioritize"};
  }
  return {};
}

AgentPipeline::AgentPipeline(CompletionProvider& provider, AgentConfig config)
    : provider_(provider), config_(std::move(config)) {}

std::optional<Completion> AgentPipeline::complete_stage(
    const std::string& stage, int iteration, const std::string& prompt,
    bool rethrow_provider_failure) {
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    std::string attempt_prompt =
        attempt == 0 ? prompt : prompt + retry_suffix(attempt);
    Completion c;
    try {
      c = provider_.complete(attempt_prompt, config_.token_budget,
                             {stage, iteration});
    } catch (const PlaybookMiss&) {
      throw;  // broken recording: never degrade, never retry
    } catch (const ProviderFailure&) {
      if (attempt == config_.max_retries) {
        if (rethrow_provider_failure) throw;
        return std::nullopt;
      }
      continue;
    }
    if (log_ != nullptr) {
      log_->push_back({stage, iteration, attempt_prompt, c.text});
    }
    return c;
  }
  return std::nullopt;
}

std::vector<ModificationTarget> AgentPipeline::run_analysis(
    const TrialProtocol& p, FailureMode mode, const LoadedMemory& loaded,
    const std::map<SlotId, SlotOutcome>& outcomes,
    const ModeMemory* global_mode, int iteration) {
  const std::string guidance = render_guidance_section(loaded.strategic);
  std::map<std::string, std::string> base_vars = ProtocolVars(p, mode);

  std::vector<ModificationTarget> targets;
  std::map<std::pair<std::string, int>, ClassificationScores> classified;
  std::string context;

  auto note = [this](const std::string& text) {
    if (notes_ != nullptr) notes_->push_back(text);
  };

  // Each stage parses through this wrapper: a completion that stays
  // unparsable after retries skips the stage, keeping earlier conclusions.
  auto parse_stage = [&](const std::string& stage, const std::string& tmpl,
                         std::map<std::string, std::string> vars,
                         auto parser) -> bool {
    std::string prompt = config_.prompts.render(tmpl, vars);
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      std::string attempt_prompt =
          attempt == 0 ? prompt : prompt + retry_suffix(attempt);
      Completion c;
      try {
        c = provider_.complete(attempt_prompt, config_.token_budget,
                               {stage, iteration});
      } catch (const PlaybookMiss&) {
        throw;
      } catch (const ProviderFailure&) {
        if (attempt == config_.max_retries) throw;
        continue;
      }
      if (log_ != nullptr) {
        log_->push_back({stage, iteration, attempt_prompt, c.text});
      }
      try {
        parser(c.text);
        return true;
      } catch (const TagParseError&) {
        if (attempt == config_.max_retries) {
          note(stage + " skipped: output unparsable after retries");
          return false;
        }
      }
    }
    return false;
  };

  const std::vector<std::string> stages = analysis_stages(mode);
  for (const std::string& stage : stages) {
    if (stage == "analysis.profile") {
      if (mode == FailureMode::Safety) {
        parse_stage(stage, "analysis_profile_safety", base_vars,
                    [&](const std::string& text) {
          AdverseEventProfile profile = parse_adverse_event_profile(text);
          context += "Toxicity assessment: " + profile.mechanism_consistency;
          if (!profile.root_cause_hypothesis.empty()) {
            context += " Root cause: " + profile.root_cause_hypothesis;
          }
          context += "\n";
          for (const std::string& gap : profile.critical_gaps) {
            ModificationTarget t;
            t.target = AspectRef{std::string(kExclusionCriteria), std::nullopt};
            t.action = ActionType::Add;
            t.strategy = gap;
            t.confidence = kProfileGapConfidence;
            t.impact = ImpactLevel::Major;
            t.category = PatternCategory::SafetyExclusion;
            targets.push_back(std::move(t));
          }
        });
      } else {
        parse_stage(stage, "analysis_profile_efficacy", base_vars,
                    [&](const std::string& text) {
          // Free-form prose: carried as context for later stages.
          context += text;
          context += "\n";
        });
      }
    } else if (stage == "analysis.classify") {
      std::map<std::string, std::string> vars = base_vars;
      vars["strategic_guidance"] = guidance;
      parse_stage(stage, "analysis_classification", vars,
                  [&](const std::string& text) {
        std::vector<ClassificationScores> blocks = parse_classification(text);
        int flagged = 0;
        for (const ClassificationScores& c : blocks) {
          if (!c.aspect || !c.aspect->index) continue;
          if (!is_modifiable_aspect(c.aspect->aspect_name) ||
              aspect_kind(c.aspect->aspect_name) != AspectKind::List) {
            continue;
          }
          const auto& items = p.criteria(c.aspect->aspect_name);
          if (*c.aspect->index < 0 ||
              *c.aspect->index >= static_cast<int>(items.size())) {
            note("classification dropped: index " +
                 std::to_string(*c.aspect->index) + " out of range for " +
                 c.aspect->aspect_name);
            continue;
          }
          classified[{c.aspect->aspect_name, *c.aspect->index}] = c;
          ++flagged;

          if (mode == FailureMode::Enrollment &&
              c.primary == PatternCategory::ParticipationBarrier) {
            ModificationTarget t;
            t.target = *c.aspect;
            t.action = ActionType::Delete;
            t.strategy = c.reasoning;
            t.confidence = c.score(PatternCategory::ParticipationBarrier);
            t.impact = ImpactFromConfidence(t.confidence);
            t.category = c.primary;
            targets.push_back(std::move(t));
          } else if (mode == FailureMode::Efficacy &&
                     c.primary == PatternCategory::EnrichmentCriterion) {
            ModificationTarget t;
            t.target = *c.aspect;
            t.action = ActionType::Modify;
            t.strategy = c.reasoning;
            t.confidence = c.score(PatternCategory::EnrichmentCriterion);
            t.impact = ImpactFromConfidence(t.confidence);
            t.category = c.primary;
            targets.push_back(std::move(t));
          }
        }
        context += "Classified " + std::to_string(flagged) +
                   " eligibility criteria into design patterns.\n";

        if (mode == FailureMode::Safety || mode == FailureMode::Efficacy) {
          ModificationTarget t;
          t.target = AspectRef{std::string(kDosage), std::nullopt};
          t.action = ActionType::Modify;
          t.strategy = mode == FailureMode::Safety
                           ? "Reduce dose intensity to address the observed "
                             "toxicity while preserving exposure"
                           : "Intensify the regimen to strengthen the "
                             "exposure-response signal";
          t.confidence = kProvisionalDosageConfidence;
          t.impact = ImpactLevel::Minor;
          targets.push_back(std::move(t));
        }
      });
    } else if (stage == "analysis.mechanism") {
      std::map<std::string, std::string> vars = base_vars;
      vars.erase("adverse_events");
      vars["context"] = context.empty() ? "(none)" : context;
      parse_stage(stage, "analysis_mechanism", vars,
                  [&](const std::string& text) {
        MechanismFindings findings = parse_mechanism(text);
        context += findings.analysis;
        context += "\n";
        if (findings.missing_enrichment_criterion) {
          ModificationTarget t;
          t.target = AspectRef{std::string(kInclusionCriteria), std::nullopt};
          t.action = ActionType::Add;
          t.strategy = *findings.missing_enrichment_criterion;
          t.confidence = kMechanismAddConfidence;
          t.impact = ImpactLevel::Major;
          t.category = PatternCategory::EnrichmentCriterion;
          targets.push_back(std::move(t));
        }
      });
    } else if (stage == "analysis.pivots") {
      std::map<std::string, std::string> vars = base_vars;
      vars.erase("inclusion_criteria");
      vars.erase("exclusion_criteria");
      vars["context"] = context.empty() ? "(none)" : context;
      parse_stage(stage, "analysis_pivots", vars,
                  [&](const std::string& text) {
        DesignPivots pivots = parse_design_pivots(text);
        const std::string summary = pivots.get("summary");
        if (!summary.empty()) {
          context += "Design pivot assessment: " + summary + "\n";
        }
        const std::string proposed = pivots.get("proposed_primary_outcome");
        if (!proposed.empty()) {
          ModificationTarget t;
          t.target = AspectRef{std::string(kTargetPrimaryOutcome), std::nullopt};
          t.action = ActionType::Modify;
          t.strategy = proposed;
          if (!summary.empty()) t.strategy += " (" + summary + ")";
          t.confidence = kPivotOutcomeConfidence;
          t.impact = ImpactLevel::Major;
          targets.push_back(std::move(t));
        }
      });
    } else if (stage == "analysis.tradeoff") {
      std::string rendered_targets;
      for (const ModificationTarget& t : targets) {
        rendered_targets += "- " + DescribeTarget(t) + "\n";
      }
      if (rendered_targets.empty()) rendered_targets = "  (none)\n";
      std::map<std::string, std::string> vars = base_vars;
      vars["targets"] = rendered_targets;
      vars["context"] = context.empty() ? "(none)" : context;
      vars["strategic_guidance"] = guidance;
      parse_stage(stage, "analysis_tradeoff", vars,
                  [&](const std::string& text) {
        std::vector<TradeoffBlock> blocks = parse_tradeoffs(text);
        // The verdict stage is authoritative: it replaces every provisional
        // target, and aspects it stays silent on are kept unchanged.
        std::vector<ModificationTarget> verdicts;
        for (const TradeoffBlock& b : blocks) {
          std::string rec;
          for (char c : b.net_recommendation) {
            rec += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
          }
          if (rec == "KEEP" || rec == "NOT_RELATED") continue;

          if (!is_modifiable_aspect(b.aspect_name)) {
            note("tradeoff verdict dropped: unknown aspect " + b.aspect_name);
            continue;
          }
          const AspectKind kind = aspect_kind(b.aspect_name);
          ModificationTarget t;
          t.strategy = b.reasoning;
          t.confidence = b.confidence;
          if (rec == "DELETE") {
            if (kind != AspectKind::List || !b.index) {
              note("tradeoff verdict dropped: DELETE needs a list index");
              continue;
            }
            t.action = ActionType::Delete;
            t.target = AspectRef{b.aspect_name, b.index};
          } else if (rec == "MODIFY") {
            t.action = ActionType::Modify;
            if (kind == AspectKind::List) {
              if (!b.index) {
                note("tradeoff verdict dropped: list MODIFY needs an index");
                continue;
              }
              t.target = AspectRef{b.aspect_name, b.index};
            } else {
              t.target = AspectRef{b.aspect_name, std::nullopt};
            }
          } else if (rec == "ADD") {
            if (kind != AspectKind::List) {
              note("tradeoff verdict dropped: ADD needs a list aspect");
              continue;
            }
            t.target = AspectRef{b.aspect_name, std::nullopt};
            t.action = ActionType::Add;
          } else {
            note("tradeoff verdict dropped: unknown recommendation " +
                 b.net_recommendation);
            continue;
          }

          if (t.target.index) {
            const auto& items = p.criteria(t.target.aspect_name);
            if (*t.target.index < 0 ||
                *t.target.index >= static_cast<int>(items.size())) {
              note("tradeoff verdict dropped: index " +
                   std::to_string(*t.target.index) + " out of range for " +
                   t.target.aspect_name);
              continue;
            }
          }

          if (b.impact_level) {
            t.impact = impact_level_from_token(*b.impact_level);
          } else {
            t.impact = ImpactFromConfidence(t.confidence);
          }

          if (kind == AspectKind::List) {
            auto cit = t.target.index
                           ? classified.find({t.target.aspect_name, *t.target.index})
                           : classified.end();
            if (cit != classified.end()) {
              t.category = cit->second.primary;
            } else {
              t.category = DefaultCategory(mode, t.action);
            }
          }
          verdicts.push_back(std::move(t));
        }
        targets = std::move(verdicts);
      });
    } else if (stage == "analysis.prioritize") {
      std::string rendered_targets;
      for (const ModificationTarget& t : targets) {
        rendered_targets += "- " + DescribeTarget(t) + "\n";
      }
      if (rendered_targets.empty()) rendered_targets = "  (none)\n";
      std::string prompt = config_.prompts.render(
          "analysis_prioritize", {{"nct_id", p.nct_id},
                                  {"failure_mode", to_token(mode)},
                                  {"targets", rendered_targets}});
      try {
        // Pass-through context: any well-formed text is acceptable.
        complete_stage(stage, iteration, prompt, /*rethrow=*/false);
      } catch (const PlaybookMiss&) {
        throw;
      }
    }
  }

  // Collapse duplicate verdicts on the same slot+action, keeping the most
  // confident occurrence (first wins on ties).
  std::vector<ModificationTarget> deduped;
  std::map<TargetKey, std::size_t> best_at;
  for (ModificationTarget& t : targets) {
    TargetKey key = KeyOf(t);
    auto it = best_at.find(key);
    if (it == best_at.end()) {
      best_at.emplace(key, deduped.size());
      deduped.push_back(std::move(t));
    } else if (t.confidence > deduped[it->second].confidence) {
      deduped[it->second] = std::move(t);
    }
  }

  for (ModificationTarget& t : deduped) {
    const SlotId slot{t.target.aspect_name, t.target.index};
    auto oit = outcomes.find(slot);
    const SlotOutcome* outcome = oit == outcomes.end() ? nullptr : &oit->second;
    const CategorySignature* sig = nullptr;
    if (global_mode != nullptr) {
      const std::string key =
          t.category ? to_token(*t.category) : t.target.aspect_name;
      auto sit = global_mode->signatures.find(key);
      if (sit != global_mode->signatures.end()) sig = &sit->second;
    }
    t.confidence = adjusted_confidence(t.confidence, outcome, sig,
                                       to_token(t.action),
                                       config_.memory_params);
    if (config_.calibrate) {
      t.confidence = std::clamp(config_.calibrate(t.confidence), 0.0, 1.0);
    }
  }

  std::sort(deduped.begin(), deduped.end(),
            [](const ModificationTarget& a, const ModificationTarget& b) {
              if (a.confidence != b.confidence) return a.confidence > b.confidence;
              if (a.target.aspect_name != b.target.aspect_name) {
                return a.target.aspect_name < b.target.aspect_name;
              }
              int ia = a.target.index.value_or(-1);
              int ib = b.target.index.value_or(-1);
              if (ia != ib) return ia < ib;
              return to_token(a.action) < to_token(b.action);
            });
  return deduped;
}

std::vector<Augmentation> AgentPipeline::run_augment(
    const std::vector<ModificationTarget>& targets, const TrialProtocol& p,
    FailureMode mode, const TacticalExemplars& tactical,
    const GenerationCountFn& count_for, int iteration) {
  std::vector<Augmentation> out;
  std::map<std::string, bool> seen_ids;

  auto note = [this](const std::string& text) {
    if (notes_ != nullptr) notes_->push_back(text);
  };

  auto emit = [&](Augmentation aug) {
    if (seen_ids.count(aug.id)) return;  // textually identical duplicate
    seen_ids[aug.id] = true;
    out.push_back(std::move(aug));
  };

  for (const ModificationTarget& t : targets) {
    const AspectKind kind = is_modifiable_aspect(t.target.aspect_name)
                                ? aspect_kind(t.target.aspect_name)
                                : AspectKind::List;
    const SlotId slot{t.target.aspect_name, t.target.index};

    if (t.action == ActionType::Delete) {
      // Deleting needs no generated text; the target converts directly.
      Augmentation aug = make_augmentation(t.target, ActionType::Delete,
                                           std::nullopt, t.strategy,
                                           t.confidence);
      aug.category = t.category;
      if (t.target.index) {
        const auto& items = p.criteria(t.target.aspect_name);
        if (*t.target.index < static_cast<int>(items.size())) {
          aug.original_value = items[*t.target.index];
        }
      }
      emit(std::move(aug));
      continue;
    }

    std::string original = "(not applicable)";
    std::optional<std::string> original_value;
    if (t.action == ActionType::Modify) {
      if (kind == AspectKind::List && t.target.index) {
        original = p.criteria(t.target.aspect_name)[*t.target.index];
      } else if (kind == AspectKind::String) {
        original = p.text_aspect(t.target.aspect_name);
      }
      original_value = original;
    }

    std::string tmpl;
    bool dosage_grammar = false;
    if (t.target.aspect_name == kDosage) {
      dosage_grammar = true;
      switch (mode) {
        case FailureMode::Safety: tmpl = "augment_dosage_reduce"; break;
        case FailureMode::Efficacy: tmpl = "augment_dosage_escalate"; break;
        case FailureMode::Enrollment: tmpl = "augment_dosage_adjust"; break;
      }
    } else if (t.target.aspect_name == kTargetPrimaryOutcome) {
      tmpl = "augment_outcome";
    } else {
      tmpl = "augment_eligibility";
    }

    const int n = std::max(1, count_for ? count_for(t) : 3);
    std::map<std::string, std::string> vars{
        {"n", std::to_string(n)},
        {"original", original},
        {"strategy", t.strategy},
        {"few_shot", render_few_shot(tactical, slot)},
    };
    if (tmpl == "augment_eligibility") {
      vars["failure_mode"] = to_token(mode);
      vars["aspect_name"] = t.target.aspect_name;
      vars["action"] = to_token(t.action);
    } else if (tmpl == "augment_outcome") {
      vars["failure_mode"] = to_token(mode);
    }

    const std::string stage = "augment:" + to_string(t.target);
    std::string prompt = config_.prompts.render(tmpl, vars);

    bool produced = false;
    for (int attempt = 0; attempt <= config_.max_retries && !produced;
         ++attempt) {
      std::string attempt_prompt =
          attempt == 0 ? prompt : prompt + retry_suffix(attempt);
      Completion c;
      try {
        c = provider_.complete(attempt_prompt, config_.token_budget,
                               {stage, iteration});
      } catch (const PlaybookMiss&) {
        throw;
      } catch (const ProviderFailure&) {
        if (attempt == config_.max_retries) throw;
        continue;
      }
      if (log_ != nullptr) {
        log_->push_back({stage, iteration, attempt_prompt, c.text});
      }

      // (value, per-variant strategy override or empty)
      std::vector<std::pair<std::string, std::string>> variants;
      try {
        if (dosage_grammar) {
          for (DosageVariant& v : parse_dosage_augmentations(c.text)) {
            variants.emplace_back(std::move(v.value), std::move(v.rationale));
          }
        } else {
          for (std::string& v : parse_augmentations(c.text)) {
            variants.emplace_back(std::move(v), std::string());
          }
        }
      } catch (const TagParseError&) {
        if (attempt == config_.max_retries) {
          note(stage + " skipped: output unparsable after retries");
        }
        continue;
      }

      for (auto& [value, rationale] : variants) {
        if (value.empty()) continue;
        if (tactical.is_banned(slot, value)) {
          note(stage + ": suppressed banned candidate text");
          continue;
        }
        Augmentation aug = make_augmentation(
            t.target, t.action, value,
            rationale.empty() ? t.strategy : rationale, t.confidence);
        aug.category = t.category;
        aug.original_value = original_value;
        emit(std::move(aug));
      }
      produced = true;  // parse succeeded, even if every variant was filtered
    }
  }
  return out;
}

std::vector<Augmentation> AgentPipeline::run_validate(
    std::vector<Augmentation> augs, const TrialProtocol& p, int iteration) {
  std::string summary = "NCT ID: " + p.nct_id + "\nPhase: " + to_token(p.phase) +
                        "\nCondition: " + p.condition +
                        "\nIntervention: " + p.intervention_name +
                        "\nFailure reason: " + FailureNarrative(p);

  auto note = [this](const std::string& text) {
    if (notes_ != nullptr) notes_->push_back(text);
  };

  for (Augmentation& aug : augs) {
    if (aug.validation != ValidationTier::Pending) continue;

    std::string original = "(none)";
    if (aug.original_value) original = *aug.original_value;
    std::string proposed =
        aug.value ? *aug.value : "(remove this criterion entirely)";

    std::string evidence;
    if (config_.evidence_lookup) {
      if (std::optional<std::string> found = config_.evidence_lookup(aug, p)) {
        evidence = "\nRetrieved evidence:\n" + *found + "\n";
      }
    }

    std::string prompt = config_.prompts.render(
        "validate_judge", {{"protocol_summary", summary},
                           {"aspect_name", aug.target.aspect_name},
                           {"action", to_token(aug.action)},
                           {"original", original},
                           {"proposed", proposed},
                           {"strategy", aug.strategy},
                           {"evidence", evidence}});

    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      std::string attempt_prompt =
          attempt == 0 ? prompt : prompt + retry_suffix(attempt);
      Completion c;
      try {
        c = provider_.complete(attempt_prompt, config_.token_budget,
                               {"validate", iteration});
      } catch (const PlaybookMiss&) {
        throw;
      } catch (const ProviderFailure&) {
        if (attempt == config_.max_retries) {
          // Fail closed: an unjudged candidate stays Pending and is excluded
          // from the search rather than entering it ungraded.
          note("validate: provider unavailable; candidate " + aug.id +
               " stays pending");
        }
        continue;
      }
      if (log_ != nullptr) {
        log_->push_back({"validate", iteration, attempt_prompt, c.text});
      }
      try {
        ValidationVerdict verdict = parse_validation_verdict(c.text);
        aug.validation = verdict.tier;
        break;
      } catch (const Error&) {  // malformed verdict or unknown tier
        if (attempt == config_.max_retries) {
          note("validate: unparsable verdict; candidate " + aug.id +
               " stays pending");
        }
      }
    }
  }
  return augs;
}

}  // namespace trialmend
