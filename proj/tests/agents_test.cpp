#include <doctest.h>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "trialmend/agents.hpp"
#include "trialmend/errors.hpp"
#include "trialmend/synthetic.hpp"

using namespace trialmend;

namespace {

/// Pass-through provider that lets a test override or sabotage chosen calls.
class Hijacker : public CompletionProvider {
 public:
  using Hook = std::function<std::optional<std::string>(
      const CallMeta&, const std::string& prompt, int attempt)>;

  Hijacker(CompletionProvider& inner, Hook hook)
      : inner_(inner), hook_(std::move(hook)) {}

  Completion complete(const std::string& prompt, int max_tokens,
                      const CallMeta& meta) override {
    int attempt = ++attempts_[meta.stage];
    if (auto forced = hook_(meta, prompt, attempt)) {
      Completion c;
      c.text = *forced;
      c.tokens_in = static_cast<std::int64_t>(prompt.size() + 3) / 4;
      c.tokens_out = static_cast<std::int64_t>(forced->size() + 3) / 4;
      return c;
    }
    return inner_.complete(prompt, max_tokens, meta);
  }
  std::string descriptor() const override { return "hijacked"; }

  int attempts(const std::string& stage) const {
    auto it = attempts_.find(stage);
    return it == attempts_.end() ? 0 : it->second;
  }

 private:
  CompletionProvider& inner_;
  Hook hook_;
  std::map<std::string, int> attempts_;
};

int flaw_index(const TrialProtocol& p, const std::string& marker) {
  const std::string needle = "[" + marker + "]";
  for (std::size_t i = 0; i < p.inclusion_criteria.size(); ++i) {
    if (p.inclusion_criteria[i].find(needle) != std::string::npos) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

AgentConfig default_config() { return AgentConfig{}; }

}  // namespace

TEST_CASE("stage sequences are fixed per failure mode") {
  CHECK(analysis_stages(FailureMode::Enrollment) ==
        std::vector<std::string>{"analysis.classify", "analysis.mechanism",
                                 "analysis.tradeoff", "analysis.prioritize"});
  CHECK(analysis_stages(FailureMode::Safety) ==
        std::vector<std::string>{"analysis.profile", "analysis.classify",
                                 "analysis.pivots", "analysis.tradeoff",
                                 "analysis.prioritize"});
  CHECK(analysis_stages(FailureMode::Efficacy) ==
        std::vector<std::string>{"analysis.profile", "analysis.classify",
                                 "analysis.mechanism", "analysis.pivots",
                                 "analysis.tradeoff", "analysis.prioritize"});
}

TEST_CASE("analysis proposes exactly the fixes scheduled for the iteration") {
  SyntheticCorpus corpus = make_corpus({4, 7, 0.45});
  const SyntheticTrial& trial = corpus.trials[0];
  REQUIRE(trial.mode == FailureMode::Enrollment);
  REQUIRE(trial.fixes[0].action == ActionType::Delete);

  SyntheticAnalystProvider provider;
  AgentPipeline pipeline(provider, default_config());
  std::vector<ModificationTarget> targets = pipeline.run_analysis(
      trial.protocol, trial.mode, {}, {}, nullptr, 1);

  REQUIRE(targets.size() == 1);  // only the priority-1 fix is due
  CHECK(targets[0].action == ActionType::Delete);
  CHECK(targets[0].target.aspect_name == std::string(kInclusionCriteria));
  CHECK(targets[0].target.index ==
        flaw_index(trial.protocol, trial.fixes[0].marker));
  REQUIRE(targets[0].category.has_value());
  CHECK(*targets[0].category == PatternCategory::ParticipationBarrier);
  // Tradeoff confidence 0.9, then the unexplored-slot bonus caps at 1.
  CHECK(targets[0].confidence == doctest::Approx(1.0));
}

TEST_CASE("a protocol with nothing wrong yields an empty analysis") {
  SyntheticTrial sound = make_empty_analysis_trial();
  SyntheticAnalystProvider provider;
  AgentPipeline pipeline(provider, default_config());
  std::vector<std::string> notes;
  pipeline.set_notes(&notes);
  CHECK(pipeline
            .run_analysis(sound.protocol, sound.mode, {}, {}, nullptr, 1)
            .empty());
}

TEST_CASE("strategic guidance reaches exactly the classify and tradeoff prompts") {
  AblationCorpus ab = make_ablation_corpus(3, 11);
  const SyntheticTrial& trial = ab.corpus.trials[0];
  LoadedMemory with_guidance;
  with_guidance.strategic =
      ab.warm_memory.mode(trial.mode).strategic;

  SyntheticAnalystProvider provider;
  AgentPipeline pipeline(provider, default_config());
  std::vector<PromptLogEntry> log;
  pipeline.set_log(&log);

  std::vector<ModificationTarget> targets = pipeline.run_analysis(
      trial.protocol, trial.mode, with_guidance, {}, nullptr, 1);

  // Guidance unlocks the hint-gated delete on top of the always-on dosage fix.
  REQUIRE(targets.size() == 2);
  CHECK(targets[0].action == ActionType::Delete);
  CHECK(targets[1].action == ActionType::Modify);
  CHECK(targets[1].target.aspect_name == std::string(kDosage));

  REQUIRE_FALSE(log.empty());
  for (const auto& entry : log) {
    bool carries =
        entry.prompt.find("<strategic_guidance>") != std::string::npos;
    if (entry.stage == "analysis.classify" ||
        entry.stage == "analysis.tradeoff") {
      CHECK(carries);
    } else {
      CHECK_FALSE(carries);
    }
  }

  // Without guidance the gated fix stays hidden.
  AgentPipeline cold(provider, default_config());
  std::vector<ModificationTarget> fewer = cold.run_analysis(
      trial.protocol, trial.mode, {}, {}, nullptr, 1);
  REQUIRE(fewer.size() == 1);
  CHECK(fewer[0].target.aspect_name == std::string(kDosage));
}

TEST_CASE("a slot whose past changes all failed drops to zero and sorts last") {
  AblationCorpus ab = make_ablation_corpus(3, 11);
  const SyntheticTrial& trial = ab.corpus.trials[0];
  LoadedMemory loaded;
  loaded.strategic = ab.warm_memory.mode(trial.mode).strategic;

  int idx = flaw_index(trial.protocol, trial.fixes[0].marker);
  REQUIRE(idx >= 0);
  std::map<SlotId, SlotOutcome> outcomes;
  SlotOutcome failed;
  failed.attributed = 2;
  failed.positive = 0;
  outcomes[SlotId{std::string(kInclusionCriteria), idx}] = failed;

  SyntheticAnalystProvider provider;
  AgentPipeline pipeline(provider, default_config());
  std::vector<ModificationTarget> targets = pipeline.run_analysis(
      trial.protocol, trial.mode, loaded, outcomes, nullptr, 1);

  REQUIRE(targets.size() == 2);
  CHECK(targets.back().action == ActionType::Delete);
  CHECK(targets.back().confidence == 0.0);
  CHECK(targets.front().confidence > 0.0);
}

TEST_CASE("augment turns targets into pending candidates, one per request") {
  AblationCorpus ab = make_ablation_corpus(3, 11);
  const SyntheticTrial& trial = ab.corpus.trials[0];
  LoadedMemory loaded;
  loaded.strategic = ab.warm_memory.mode(trial.mode).strategic;

  SyntheticAnalystProvider provider;
  AgentPipeline pipeline(provider, default_config());
  std::vector<ModificationTarget> targets = pipeline.run_analysis(
      trial.protocol, trial.mode, loaded, {}, nullptr, 1);
  REQUIRE(targets.size() == 2);

  std::vector<Augmentation> augs = pipeline.run_augment(
      targets, trial.protocol, trial.mode, {},
      [](const ModificationTarget&) { return 1; }, 1);

  REQUIRE(augs.size() == 2);
  for (const auto& a : augs) CHECK(a.validation == ValidationTier::Pending);

  const Augmentation* del = nullptr;
  const Augmentation* dose = nullptr;
  for (const auto& a : augs) {
    if (a.action == ActionType::Delete) del = &a;
    if (a.target.aspect_name == std::string(kDosage)) dose = &a;
  }
  REQUIRE(del != nullptr);
  REQUIRE(dose != nullptr);
  CHECK(del->target.index == flaw_index(trial.protocol,
                                        trial.fixes[0].marker));
  CHECK_FALSE(del->value.has_value());
  // The generated text is the shared deterministic fix text.
  CHECK(*dose->value == fix_value_text(ActionType::Modify,
                                       std::string(kDosage),
                                       trial.fixes[1].marker));
}

TEST_CASE("banned exemplar values are never re-proposed") {
  AblationCorpus ab = make_ablation_corpus(3, 11);
  const SyntheticTrial& trial = ab.corpus.trials[0];

  SyntheticAnalystProvider provider;
  AgentPipeline pipeline(provider, default_config());
  std::vector<ModificationTarget> targets = pipeline.run_analysis(
      trial.protocol, trial.mode, {}, {}, nullptr, 1);
  REQUIRE(targets.size() == 1);  // dosage only (no guidance)

  std::string fix_text = fix_value_text(
      ActionType::Modify, std::string(kDosage), trial.fixes[1].marker);
  TacticalExemplars tactical;
  tactical.slots[SlotId{std::string(kDosage), std::nullopt}]
                [ValidationTier::Banned]
                    .push_back(fix_text);

  std::vector<Augmentation> augs = pipeline.run_augment(
      targets, trial.protocol, trial.mode, tactical,
      [](const ModificationTarget&) { return 1; }, 1);
  for (const auto& a : augs) {
    CHECK(a.value != fix_text);
  }
}

TEST_CASE("the judge grades candidates and failures stay pending") {
  AblationCorpus ab = make_ablation_corpus(3, 11);
  const SyntheticTrial& trial = ab.corpus.trials[0];

  SyntheticAnalystProvider provider;
  AgentPipeline pipeline(provider, default_config());
  std::vector<ModificationTarget> targets = pipeline.run_analysis(
      trial.protocol, trial.mode, {}, {}, nullptr, 1);
  std::vector<Augmentation> augs = pipeline.run_augment(
      targets, trial.protocol, trial.mode, {},
      [](const ModificationTarget&) { return 1; }, 1);
  REQUIRE_FALSE(augs.empty());

  std::vector<Augmentation> graded =
      pipeline.run_validate(augs, trial.protocol, 1);
  REQUIRE(graded.size() == augs.size());
  for (const auto& a : graded) CHECK(a.validation == ValidationTier::Good);

  // A judge outage is fail-closed: the candidate stays Pending.
  Hijacker outage(provider, [](const CallMeta& meta, const std::string&,
                               int) -> std::optional<std::string> {
    if (meta.stage == "validate") throw ProviderFailure("judge offline");
    return std::nullopt;
  });
  AgentPipeline broken(outage, default_config());
  std::vector<Augmentation> stuck =
      broken.run_validate(augs, trial.protocol, 1);
  for (const auto& a : stuck) CHECK(a.validation == ValidationTier::Pending);

  // So is an unparsable verdict.
  Hijacker gibberish(provider, [](const CallMeta& meta, const std::string&,
                                  int) -> std::optional<std::string> {
    if (meta.stage == "validate") return std::string("inscrutable prose");
    return std::nullopt;
  });
  AgentPipeline muddled(gibberish, default_config());
  std::vector<Augmentation> unread =
      muddled.run_validate(augs, trial.protocol, 1);
  for (const auto& a : unread) CHECK(a.validation == ValidationTier::Pending);
}

TEST_CASE("an unparsable optional stage is skipped, with a note") {
  SyntheticCorpus corpus = make_corpus({4, 7, 0.45});
  const SyntheticTrial& trial = corpus.trials[0];

  SyntheticAnalystProvider provider;
  AgentPipeline clean(provider, default_config());
  std::vector<ModificationTarget> expected = clean.run_analysis(
      trial.protocol, trial.mode, {}, {}, nullptr, 1);

  Hijacker sabotage(provider, [](const CallMeta& meta, const std::string&,
                                 int) -> std::optional<std::string> {
    if (meta.stage == "analysis.mechanism") return std::string("zzz");
    return std::nullopt;
  });
  AgentPipeline pipeline(sabotage, default_config());
  std::vector<std::string> notes;
  pipeline.set_notes(&notes);
  std::vector<ModificationTarget> targets = pipeline.run_analysis(
      trial.protocol, trial.mode, {}, {}, nullptr, 1);

  // The tradeoff verdicts are authoritative, so the damage is contained.
  REQUIRE(targets.size() == expected.size());
  CHECK(targets[0].target.aspect_name == expected[0].target.aspect_name);
  bool noted = false;
  for (const auto& n : notes) {
    if (n.find("analysis.mechanism") != std::string::npos) noted = true;
  }
  CHECK(noted);
  // All three attempts (first call plus two retries) were spent.
  CHECK(sabotage.attempts("analysis.mechanism") == 3);
}

TEST_CASE("a parse failure triggers a retry with an escalated prompt") {
  SyntheticCorpus corpus = make_corpus({4, 7, 0.45});
  const SyntheticTrial& trial = corpus.trials[0];

  SyntheticAnalystProvider provider;
  std::string second_prompt;
  Hijacker flaky(provider,
                 [&second_prompt](const CallMeta& meta,
                                  const std::string& prompt,
                                  int attempt) -> std::optional<std::string> {
                   if (meta.stage != "analysis.classify") return std::nullopt;
                   if (attempt == 1) return std::string("line noise");
                   second_prompt = prompt;
                   return std::nullopt;  // delegate the retry
                 });
  AgentPipeline pipeline(flaky, default_config());
  std::vector<ModificationTarget> targets = pipeline.run_analysis(
      trial.protocol, trial.mode, {}, {}, nullptr, 1);

  CHECK(flaky.attempts("analysis.classify") == 2);
  CHECK_FALSE(targets.empty());
  CHECK(second_prompt.find(retry_suffix(1)) != std::string::npos);
}

TEST_CASE("a missing playbook entry is fatal, not a degraded run") {
  SyntheticCorpus corpus = make_corpus({4, 7, 0.45});
  ScriptedProvider empty_script(Playbook{});
  AgentPipeline pipeline(empty_script, default_config());
  CHECK_THROWS_AS(pipeline.run_analysis(corpus.trials[0].protocol,
                                        corpus.trials[0].mode, {}, {},
                                        nullptr, 1),
                  PlaybookMiss);
}

TEST_CASE("a provider that stays down exhausts retries and surfaces") {
  SyntheticCorpus corpus = make_corpus({4, 7, 0.45});

  class DownProvider : public CompletionProvider {
   public:
    Completion complete(const std::string&, int, const CallMeta&) override {
      ++calls;
      throw ProviderFailure("socket closed");
    }
    std::string descriptor() const override { return "down"; }
    int calls = 0;
  } down;

  AgentPipeline pipeline(down, default_config());
  CHECK_THROWS_AS(pipeline.run_analysis(corpus.trials[0].protocol,
                                        corpus.trials[0].mode, {}, {},
                                        nullptr, 1),
                  ProviderFailure);
  // One initial call plus the two configured retries on the first stage.
  CHECK(down.calls == 3);
}
