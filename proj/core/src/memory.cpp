#include "trialmend/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trialmend/agents.hpp"
#include "trialmend/errors.hpp"
#include "trialmend/prompts.hpp"
#include "trialmend/provider.hpp"

namespace trialmend {

namespace {

std::string FormatReward(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.4f", r);
  return buf;
}

nlohmann::json AugmentationToJson(const Augmentation& a) {
  nlohmann::json doc{{"aspect_name", a.target.aspect_name},
                     {"action", to_token(a.action)},
                     {"strategy", a.strategy},
                     {"confidence", a.confidence},
                     {"validation", to_token(a.validation)}};
  if (a.target.index) doc["index"] = *a.target.index;
  if (a.value) doc["value"] = *a.value;
  if (a.category) doc["category"] = to_token(*a.category);
  if (a.original_value) doc["original_value"] = *a.original_value;
  return doc;
}

Augmentation AugmentationFromJson(const nlohmann::json& doc) {
  for (const char* key : {"aspect_name", "action", "strategy", "confidence"}) {
    if (!doc.contains(key)) throw MissingField(std::string("augmentation.") + key);
  }
  AspectRef ref;
  ref.aspect_name = doc["aspect_name"].get<std::string>();
  if (doc.contains("index")) ref.index = doc["index"].get<int>();
  std::optional<std::string> value;
  if (doc.contains("value")) value = doc["value"].get<std::string>();
  Augmentation a = make_augmentation(
      ref, action_from_token(doc["action"].get<std::string>()), value,
      doc["strategy"].get<std::string>(), doc["confidence"].get<double>());
  if (doc.contains("validation")) {
    a.validation = tier_from_token(doc["validation"].get<std::string>());
  }
  if (doc.contains("category")) {
    a.category = category_from_token(doc["category"].get<std::string>());
  }
  if (doc.contains("original_value")) {
    a.original_value = doc["original_value"].get<std::string>();
  }
  return a;
}

nlohmann::json GuidanceToJson(const GuidanceEntry& g) {
  return nlohmann::json{{"key", g.key},
                        {"action", g.action},
                        {"recommendation", g.recommendation},
                        {"support", g.support},
                        {"mean_reward", g.mean_reward}};
}

GuidanceEntry GuidanceFromJson(const nlohmann::json& doc) {
  GuidanceEntry g;
  g.key = doc.value("key", std::string());
  g.action = doc.value("action", std::string());
  g.recommendation = doc.value("recommendation", std::string());
  g.support = doc.value("support", std::int64_t{0});
  g.mean_reward = doc.value("mean_reward", 0.0);
  return g;
}

}  // namespace

std::string SlotId::to_string() const {
  return aspect_name + "[" + (index ? std::to_string(*index) : "None") + "]";
}

SlotId slot_id_of(const Augmentation& a) {
  return SlotId{a.target.aspect_name, a.target.index};
}

const std::vector<std::string>* TacticalExemplars::tier(
    const SlotId& slot, ValidationTier v) const {
  auto sit = slots.find(slot);
  if (sit == slots.end()) return nullptr;
  auto tit = sit->second.find(v);
  if (tit == sit->second.end()) return nullptr;
  return &tit->second;
}

bool TacticalExemplars::is_banned(const SlotId& slot,
                                  const std::string& value) const {
  const std::vector<std::string>* banned = tier(slot, ValidationTier::Banned);
  if (banned == nullptr) return false;
  return std::find(banned->begin(), banned->end(), value) != banned->end();
}

void CategorySignature::observe(double r, const std::string& action_token) {
  ++n;
  double delta = r - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (r - mean);
  if (r > 0.0) ++n_pos;
  ActionStats& st = actions[action_token];
  ++st.n;
  if (r > 0.0) ++st.n_pos;
}

double CategorySignature::variance() const {
  return n > 0 ? m2 / static_cast<double>(n) : 0.0;
}

double CategorySignature::success_rate() const {
  return n > 0 ? static_cast<double>(n_pos) / static_cast<double>(n) : 0.0;
}

nlohmann::json CategorySignature::to_json() const {
  nlohmann::json acts = nlohmann::json::object();
  for (const auto& [token, st] : actions) {
    acts[token] = {{"n", st.n}, {"n_pos", st.n_pos}};
  }
  return nlohmann::json{{"n", n},
                        {"mean", mean},
                        {"m2", m2},
                        {"n_pos", n_pos},
                        {"actions", std::move(acts)}};
}

CategorySignature CategorySignature::from_json(const nlohmann::json& doc) {
  CategorySignature sig;
  sig.n = doc.value("n", std::int64_t{0});
  sig.mean = doc.value("mean", 0.0);
  sig.m2 = doc.value("m2", 0.0);
  sig.n_pos = doc.value("n_pos", std::int64_t{0});
  if (doc.contains("actions")) {
    for (auto it = doc["actions"].begin(); it != doc["actions"].end(); ++it) {
      ActionStats st;
      st.n = it.value().value("n", std::int64_t{0});
      st.n_pos = it.value().value("n_pos", std::int64_t{0});
      sig.actions[it.key()] = st;
    }
  }
  return sig;
}

const ModeMemory* GlobalMemory::mode_if_present(FailureMode y) const {
  auto it = modes_.find(y);
  return it == modes_.end() ? nullptr : &it->second;
}

nlohmann::json GlobalMemory::to_json() const {
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& [y, mem] : modes_) {
    nlohmann::json strategic = nlohmann::json::array();
    for (const auto& g : mem.strategic) strategic.push_back(GuidanceToJson(g));
    nlohmann::json sigs = nlohmann::json::object();
    for (const auto& [key, sig] : mem.signatures) sigs[key] = sig.to_json();
    nlohmann::json pool = nlohmann::json::array();
    for (const auto& e : mem.pool) {
      pool.push_back({{"augmentation", AugmentationToJson(e.aug)},
                      {"reward", e.reward},
                      {"minted_iteration", e.minted_iteration}});
    }
    modes[to_token(y)] = {{"runs", mem.runs},
                          {"strategic", std::move(strategic)},
                          {"signatures", std::move(sigs)},
                          {"pool", std::move(pool)}};
  }
  return nlohmann::json{{"schema_version", kSchemaVersion},
                        {"modes", std::move(modes)}};
}

GlobalMemory GlobalMemory::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw MalformedDocument("memory document must be an object");
  int version = doc.value("schema_version", -1);
  if (version != kSchemaVersion) {
    throw MalformedDocument("unsupported memory schema_version " +
                            std::to_string(version));
  }
  GlobalMemory g;
  if (!doc.contains("modes")) return g;
  for (auto it = doc["modes"].begin(); it != doc["modes"].end(); ++it) {
    FailureMode y = failure_mode_from_token(it.key());
    ModeMemory mem;
    const nlohmann::json& m = it.value();
    mem.runs = m.value("runs", std::int64_t{0});
    if (m.contains("strategic")) {
      for (const auto& e : m["strategic"]) {
        mem.strategic.push_back(GuidanceFromJson(e));
      }
    }
    if (m.contains("signatures")) {
      for (auto sit = m["signatures"].begin(); sit != m["signatures"].end();
           ++sit) {
        mem.signatures[sit.key()] = CategorySignature::from_json(sit.value());
      }
    }
    if (m.contains("pool")) {
      for (const auto& e : m["pool"]) {
        if (!e.contains("augmentation")) throw MissingField("pool.augmentation");
        PoolEntry entry;
        entry.aug = AugmentationFromJson(e["augmentation"]);
        entry.reward = e.value("reward", 0.0);
        entry.minted_iteration = e.value("minted_iteration", 0);
        mem.pool.push_back(std::move(entry));
      }
    }
    g.modes_[y] = std::move(mem);
  }
  return g;
}

GlobalMemory GlobalMemory::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedDocument("cannot read memory file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedDocument("memory file " + path + ": " + e.what());
  }
  return from_json(doc);
}

void GlobalMemory::save_file(const std::string& path) const {
  // Write to a sibling temp file, then rename: readers either see the old
  // complete document or the new one, never a torn write.
  std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw MalformedDocument("cannot write memory file: " + tmp.string());
    out << to_json().dump(2) << '\n';
    if (!out.flush()) {
      throw MalformedDocument("failed writing memory file: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, target);
}

void LocalMemory::record_iteration(IterationExperience rec) {
  iterations_.push_back(std::move(rec));
}

void LocalMemory::record_banned(const Augmentation& aug) {
  banned_.push_back(aug);
}

TacticalExemplars LocalMemory::accumulated_tactical() const {
  // Track the latest tier per (slot, value), in first-seen order per slot.
  std::map<SlotId, std::vector<std::pair<std::string, ValidationTier>>> latest;
  auto upsert = [&latest](const SlotId& slot, const std::string& value,
                          ValidationTier v) {
    auto& values = latest[slot];
    for (auto& [text, tier] : values) {
      if (text == value) {
        if (tier != ValidationTier::Banned) tier = v;  // banned is sticky
        return;
      }
    }
    values.emplace_back(value, v);
  };
  for (const auto& rec : iterations_) {
    for (const auto& [slot, tiers] : rec.distilled.tactical.slots) {
      for (const auto& [tier, values] : tiers) {
        for (const auto& value : values) upsert(slot, value, tier);
      }
    }
  }
  for (const auto& aug : banned_) {
    if (!aug.value) continue;
    const SlotId slot = slot_id_of(aug);
    auto& values = latest[slot];
    bool found = false;
    for (auto& [text, tier] : values) {
      if (text == *aug.value) {
        tier = ValidationTier::Banned;
        found = true;
        break;
      }
    }
    if (!found) values.emplace_back(*aug.value, ValidationTier::Banned);
  }
  TacticalExemplars out;
  for (const auto& [slot, values] : latest) {
    for (const auto& [text, tier] : values) {
      out.slots[slot][tier].push_back(text);
    }
  }
  return out;
}

std::map<SlotId, SlotOutcome> LocalMemory::slot_outcomes() const {
  std::map<SlotId, SlotOutcome> out;
  for (const auto& rec : iterations_) {
    for (const auto& r : rec.rewards) {
      if (!r.r) continue;
      auto it = rec.augs.find(r.augmentation_id);
      if (it == rec.augs.end()) continue;
      SlotOutcome& o = out[slot_id_of(it->second)];
      ++o.attributed;
      if (*r.r > 0.0) ++o.positive;
      o.best_r = std::max(o.best_r, *r.r);
    }
  }
  return out;
}

std::optional<double> percentile_nearest_rank(std::vector<double> values,
                                              double q) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(values.size())));
  if (rank == 0) rank = 1;
  if (rank > values.size()) rank = values.size();
  return values[rank - 1];
}

std::string signature_key(const Augmentation& a) {
  if (a.category) return to_token(*a.category);
  return a.target.aspect_name;
}

DistillResult distill(const std::vector<RewardRecord>& rewards,
                      const std::map<std::string, Augmentation>& augs,
                      const std::vector<Augmentation>& banned_this_iteration,
                      int iteration) {
  DistillResult out;

  std::vector<double> positives;
  for (const auto& r : rewards) {
    if (r.r && *r.r > 0.0) positives.push_back(*r.r);
  }
  out.positive_p75 = percentile_nearest_rank(positives, 0.75);

  struct KeyAgg {
    std::int64_t n = 0;
    double sum = 0.0;
    std::map<std::string, std::pair<std::int64_t, double>> by_action;  // n, sum
  };
  std::map<std::string, KeyAgg> agg;

  for (const auto& r : rewards) {
    auto it = augs.find(r.augmentation_id);
    if (it == augs.end()) continue;
    const Augmentation& a = it->second;
    if (!r.r) continue;  // unattributable: neither tiered nor aggregated

    const double reward = *r.r;
    ValidationTier tier;
    if (reward > 0.0) {
      tier = (out.positive_p75 && reward >= *out.positive_p75)
                 ? ValidationTier::Excellent
                 : ValidationTier::Good;
    } else if (reward == 0.0) {
      tier = ValidationTier::Moderate;
    } else {
      tier = ValidationTier::Bad;
    }

    if (reward > 0.0 && out.positive_p75 && reward >= *out.positive_p75) {
      PoolEntry entry;
      entry.aug = a;
      entry.reward = reward;
      entry.minted_iteration = iteration;
      out.pool_additions.push_back(std::move(entry));
    }

    if (a.value) {
      out.tactical.slots[slot_id_of(a)][tier].push_back(*a.value);
    }

    KeyAgg& k = agg[signature_key(a)];
    ++k.n;
    k.sum += reward;
    auto& [an, asum] = k.by_action[to_token(a.action)];
    ++an;
    asum += reward;
  }

  for (const auto& aug : banned_this_iteration) {
    if (!aug.value) continue;
    out.tactical.slots[slot_id_of(aug)][ValidationTier::Banned].push_back(
        *aug.value);
  }

  for (const auto& [key, k] : agg) {
    GuidanceEntry g;
    g.key = key;
    g.support = k.n;
    g.mean_reward = k.sum / static_cast<double>(k.n);
    // Best action by mean reward; ties resolve to the lexically first token.
    double best = -1e300;
    for (const auto& [token, stats] : k.by_action) {
      double mean = stats.second / static_cast<double>(stats.first);
      if (mean > best) {
        best = mean;
        g.action = token;
      }
    }
    g.recommendation = "Prefer " + g.action + " changes targeting " + key +
                       " (mean reward " + FormatReward(g.mean_reward) +
                       " across " + std::to_string(g.support) +
                       " attributed modifications)";
    out.strategic.push_back(std::move(g));
  }

  return out;
}

int adaptive_generation_count(const CategorySignature* sig,
                              const MemoryParams& params) {
  if (sig == nullptr || sig->n == 0) return params.gen_base;
  const double rate = sig->success_rate();
  const double var_term =
      std::min(sig->variance() / params.gen_var_ref, 1.0);
  const double raw = static_cast<double>(params.gen_base) *
                     (1.0 + (1.0 - rate)) * (1.0 + var_term);
  int n = static_cast<int>(std::lround(raw));
  return std::clamp(n, 1, params.gen_max);
}

double adjusted_confidence(double confidence, const SlotOutcome* outcome,
                           const CategorySignature* sig,
                           const std::string& action_token,
                           const MemoryParams& params) {
  double c = confidence;
  if (outcome != nullptr && outcome->attributed > 0) {
    if (outcome->positive == 0) {
      c = 0.0;  // every attributed attempt on this slot failed
    } else {
      c *= (1.0 - params.diversification_penalty);
    }
  } else {
    c = std::min(1.0, c + params.exploration_bonus);
  }
  if (sig != nullptr) {
    auto it = sig->actions.find(action_token);
    if (it != sig->actions.end() && it->second.n > 0) {
      c *= it->second.success_rate();
    }
  }
  return std::clamp(c, 0.0, 1.0);
}

void transfer(GlobalMemory& global, FailureMode mode, const LocalMemory& local,
              CompletionProvider* summarizer, const PromptLibrary* prompts,
              std::vector<PromptLogEntry>* log) {
  ModeMemory& mem = global.mode(mode);
  ++mem.runs;

  if (local.iterations().empty()) return;
  const IterationExperience& final_it = local.iterations().back();

  // Signatures stream forward from the final iteration's attributed rewards.
  for (const auto& r : final_it.rewards) {
    if (!r.r) continue;
    auto it = final_it.augs.find(r.augmentation_id);
    if (it == final_it.augs.end()) continue;
    mem.signatures[signature_key(it->second)].observe(
        *r.r, to_token(it->second.action));
  }

  // Pool additions accumulate across the whole run, deduplicated by
  // augmentation id keeping the highest observed reward.
  for (const auto& rec : local.iterations()) {
    for (const auto& add : rec.distilled.pool_additions) {
      auto existing = std::find_if(
          mem.pool.begin(), mem.pool.end(),
          [&add](const PoolEntry& e) { return e.aug.id == add.aug.id; });
      if (existing == mem.pool.end()) {
        mem.pool.push_back(add);
      } else if (add.reward > existing->reward) {
        *existing = add;
      }
    }
  }

  // Strategic guidance: the final iteration's top-quartile positive patterns.
  std::vector<GuidanceEntry> candidates = final_it.distilled.strategic;
  std::vector<double> positive_means;
  for (const auto& g : candidates) {
    if (g.mean_reward > 0.0) positive_means.push_back(g.mean_reward);
  }
  std::optional<double> gate = percentile_nearest_rank(positive_means, 0.75);
  std::vector<GuidanceEntry> selected;
  for (const auto& g : candidates) {
    if (g.mean_reward > 0.0 && gate && g.mean_reward >= *gate) {
      selected.push_back(g);
    }
  }
  std::sort(selected.begin(), selected.end(),
            [](const GuidanceEntry& a, const GuidanceEntry& b) {
              if (a.mean_reward != b.mean_reward) {
                return a.mean_reward > b.mean_reward;
              }
              return a.key < b.key;
            });

  if (!selected.empty() && summarizer != nullptr && prompts != nullptr) {
    std::string patterns;
    for (const auto& g : selected) {
      patterns += "- " + g.recommendation + "\n";
    }
    std::string prompt = prompts->render(
        "transfer_summarize",
        {{"failure_mode", to_token(mode)}, {"patterns", patterns}});
    try {
      Completion c = summarizer->complete(prompt, 512,
                                          {"transfer.summarize", 0});
      if (log != nullptr) {
        log->push_back({"transfer.summarize", 0, prompt, c.text});
      }
      // One line per pattern; lines beyond the selection are ignored and
      // missing lines keep the deterministic default.
      std::istringstream lines(c.text);
      std::string line;
      std::size_t i = 0;
      while (std::getline(lines, line) && i < selected.size()) {
        if (line.empty()) continue;
        selected[i++].recommendation = line;
      }
    } catch (const ProviderFailure&) {
      // Summarization is cosmetic; the deterministic text stands.
    }
  }

  for (auto& g : selected) mem.strategic.push_back(std::move(g));
}

LoadedMemory load_memory(const GlobalMemory* global, const LocalMemory& local,
                         FailureMode mode, int t) {
  LoadedMemory out;
  if (t == 1 && global != nullptr) {
    if (const ModeMemory* mem = global->mode_if_present(mode)) {
      out.strategic = mem->strategic;
    }
  }
  out.tactical = local.accumulated_tactical();
  return out;
}

std::string render_guidance_section(const std::vector<GuidanceEntry>& entries) {
  if (entries.empty()) return "";
  std::string out = "\nGuidance distilled from previous redesigns:\n"
                    "<strategic_guidance>\n";
  for (const auto& g : entries) {
    out += "- " + g.recommendation + "\n";
  }
  out += "</strategic_guidance>\n";
  return out;
}

std::string render_few_shot(const TacticalExemplars& tactical,
                            const SlotId& slot) {
  auto it = tactical.slots.find(slot);
  if (it == tactical.slots.end() || it->second.empty()) return "";

  static const std::pair<ValidationTier, const char*> kSections[] = {
      {ValidationTier::Excellent, "EXCELLENT (confirmed reward uplift):"},
      {ValidationTier::Good, "GOOD:"},
      {ValidationTier::Moderate, "MODERATE:"},
      {ValidationTier::Bad, "BAD (avoid these patterns):"},
      {ValidationTier::Banned, "BANNED (never replicate):"},
  };

  std::string body;
  for (const auto& [tier, header] : kSections) {
    auto tit = it->second.find(tier);
    if (tit == it->second.end() || tit->second.empty()) continue;
    body += "\n";
    body += header;
    body += "\n";
    for (const auto& value : tit->second) {
      body += "- " + value + "\n";
    }
  }
  if (body.empty()) return "";

  std::string out = "\n<few_shot_examples>\n";
  out += "Previous iteration examples for THIS EXACT criterion:\n";
  out += body;
  out +=
      "\nGenerate variations that learn from EXCELLENT/GOOD patterns, avoid "
      "BAD patterns, and NEVER replicate BANNED augmentations.\n"
      "</few_shot_examples>\n";
  return out;
}

}  // namespace trialmend
