#include "trialmend/tagged.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "trialmend/errors.hpp"

namespace trialmend {

namespace {

std::string Trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

/// One extracted tag instance: attributes, inner text, and where scanning may
/// resume.
struct Block {
  std::map<std::string, std::string> attrs;
  std::string inner;
  size_t resume = 0;
};

bool IsNameBoundary(char c) {
  return c == '>' || c == '/' || std::isspace(static_cast<unsigned char>(c));
}

/// Finds the next `<name ...>...</name>` at or after `from`. Completions are
/// prose with markup islands, so anything that is not the requested tag is
/// skipped. An opening tag without its closing tag is a truncated completion.
std::optional<Block> FindBlock(const std::string& text, const std::string& name,
                               size_t from = 0) {
  const std::string open = "<" + name;
  size_t pos = from;
  while (true) {
    pos = text.find(open, pos);
    if (pos == std::string::npos) return std::nullopt;
    size_t after = pos + open.size();
    if (after < text.size() && !IsNameBoundary(text[after])) {
      pos = after;  // e.g. "<tradeoffs" while looking for "tradeoff"
      continue;
    }
    break;
  }

  Block block;
  size_t cursor = pos + open.size();
  // Attribute scan up to '>' (or a self-closing '/>').
  while (cursor < text.size() && text[cursor] != '>') {
    if (std::isspace(static_cast<unsigned char>(text[cursor]))) {
      ++cursor;
      continue;
    }
    if (text[cursor] == '/') {
      ++cursor;
      continue;
    }
    size_t eq = text.find('=', cursor);
    size_t gt = text.find('>', cursor);
    if (eq == std::string::npos || (gt != std::string::npos && eq > gt)) {
      cursor = gt == std::string::npos ? text.size() : gt;
      break;
    }
    std::string key = Trim(text.substr(cursor, eq - cursor));
    size_t vstart = eq + 1;
    while (vstart < text.size() &&
           std::isspace(static_cast<unsigned char>(text[vstart]))) {
      ++vstart;
    }
    if (vstart >= text.size()) break;
    char quote = text[vstart];
    if (quote == '"' || quote == '\'') {
      size_t vend = text.find(quote, vstart + 1);
      if (vend == std::string::npos) {
        throw TruncatedBlock("unterminated attribute in <" + name + ">");
      }
      block.attrs[key] = text.substr(vstart + 1, vend - vstart - 1);
      cursor = vend + 1;
    } else {
      size_t vend = vstart;
      while (vend < text.size() && !IsNameBoundary(text[vend])) ++vend;
      block.attrs[key] = text.substr(vstart, vend - vstart);
      cursor = vend;
    }
  }
  if (cursor >= text.size()) {
    throw TruncatedBlock("tag <" + name + "> never finishes opening");
  }
  if (cursor > pos && text[cursor - 1] == '/') {  // self-closing
    block.resume = cursor + 1;
    return block;
  }

  size_t body = cursor + 1;
  const std::string close = "</" + name + ">";
  size_t end = text.find(close, body);
  if (end == std::string::npos) {
    throw TruncatedBlock("tag <" + name + "> opened but never closed");
  }
  block.inner = text.substr(body, end - body);
  block.resume = end + close.size();
  return block;
}

/// Inner text of the first `<name>` inside `text`, trimmed; nullopt when the
/// tag is absent.
std::optional<std::string> InnerText(const std::string& text,
                                     const std::string& name) {
  auto block = FindBlock(text, name);
  if (!block) return std::nullopt;
  return Trim(block->inner);
}

/// Position of a genuine `<name...>` opening at or after `from`, or npos.
size_t FindOpenTag(const std::string& text, const std::string& name,
                   size_t from) {
  const std::string open = "<" + name;
  size_t pos = from;
  while (true) {
    pos = text.find(open, pos);
    if (pos == std::string::npos) return std::string::npos;
    size_t after = pos + open.size();
    if (after < text.size() && !IsNameBoundary(text[after])) {
      pos = after;
      continue;
    }
    return pos;
  }
}

/// Leaf-field extraction for prose values inside an already-bounded block
/// body. Model output routinely drops a closing tag mid-sentence; since the
/// enclosing block did close, the value can be recovered as everything up to
/// the next sibling field (or the end of the body) instead of failing the
/// whole completion.
template <typename Names>
std::optional<std::string> LeafText(const std::string& body,
                                    const std::string& name,
                                    const Names& siblings) {
  size_t open_at = FindOpenTag(body, name, 0);
  if (open_at == std::string::npos) return std::nullopt;
  size_t gt = body.find('>', open_at);
  if (gt == std::string::npos) return std::nullopt;
  size_t start = gt + 1;

  const std::string close = "</" + name + ">";
  size_t end = body.find(close, start);
  if (end == std::string::npos) {
    end = body.size();
    for (const auto& sibling : siblings) {
      size_t at = FindOpenTag(body, sibling, start);
      if (at != std::string::npos) end = std::min(end, at);
      size_t close_at = body.find("</" + std::string(sibling) + ">", start);
      if (close_at != std::string::npos) end = std::min(end, close_at);
    }
  }
  return Trim(body.substr(start, end - start));
}

double ParseReal(const std::string& raw, const std::string& field) {
  std::string t = Trim(raw);
  if (t.empty()) throw MalformedNumber(field + " is empty");
  const char* begin = t.c_str();
  char* end = nullptr;
  double value = std::strtod(begin, &end);
  if (end != begin + t.size()) {
    throw MalformedNumber(field + " is not a number: '" + t + "'");
  }
  return value;
}

double ParseScore(const std::string& raw, const std::string& field) {
  double value = ParseReal(raw, field);
  if (value < 0.0 || value > 1.0) {
    throw MalformedNumber(field + " outside [0,1]: '" + Trim(raw) + "'");
  }
  return value;
}

int ParseIndex(const std::string& raw, const std::string& field) {
  double value = ParseReal(raw, field);
  int i = static_cast<int>(value);
  if (static_cast<double>(i) != value || i < 0) {
    throw MalformedNumber(field + " is not a valid index: '" + Trim(raw) + "'");
  }
  return i;
}

std::optional<AspectRef> AttrAspect(const Block& block) {
  auto name_it = block.attrs.find("aspect_name");
  if (name_it == block.attrs.end()) return std::nullopt;
  AspectRef ref;
  ref.aspect_name = name_it->second;
  auto index_it = block.attrs.find("index");
  if (index_it == block.attrs.end()) index_it = block.attrs.find("aspect_index");
  if (index_it != block.attrs.end()) {
    ref.index = ParseIndex(index_it->second, "index");
  }
  return ref;
}

constexpr std::array<const char*, 4> kScoreTags = {
    "participation_barrier_score",
    "safety_exclusion_score",
    "selection_criterion_score",
    "enrichment_criterion_score",
};

}  // namespace

std::vector<ClassificationScores> parse_classification(const std::string& text) {
  std::vector<ClassificationScores> out;
  size_t pos = 0;
  bool any_block = false;
  while (auto block = FindBlock(text, "classification", pos)) {
    pos = block->resume;
    any_block = true;

    ClassificationScores c;
    c.aspect = AttrAspect(*block);
    bool any_score = false;
    for (std::size_t i = 0; i < kScoreTags.size(); ++i) {
      if (auto raw = InnerText(block->inner, kScoreTags[i])) {
        c.scores[i] = ParseScore(*raw, kScoreTags[i]);
        any_score = true;
      }
    }
    auto primary_raw = InnerText(block->inner, "primary_category");
    if (!any_score && !primary_raw) continue;  // markup noise, not a verdict
    if (!any_score && primary_raw) {
      // Only a category token was emitted; pin its score so that the
      // primary-is-argmax invariant holds by construction.
      c.scores[static_cast<std::size_t>(category_from_token(Trim(*primary_raw)))] =
          1.0;
    }
    // The emitted primary token is advisory; the scores decide. Ties fall to
    // the earliest declared category.
    std::size_t best = 0;
    for (std::size_t i = 1; i < c.scores.size(); ++i) {
      if (c.scores[i] > c.scores[best]) best = i;
    }
    c.primary = static_cast<PatternCategory>(best);
    if (auto reasoning = InnerText(block->inner, "reasoning")) {
      c.reasoning = *reasoning;
    }
    out.push_back(std::move(c));
  }
  if (!any_block) {
    // An explicitly empty wrapper means "nothing to classify", which is an
    // answer, not a missing block.
    if (!FindBlock(text, "classifications")) {
      throw NoBlockFound("no <classification> block in completion");
    }
  }
  return out;
}

namespace {

TradeoffBlock TradeoffFromBlock(const Block& block) {
  TradeoffBlock t;
  if (auto ref = AttrAspect(block)) {
    t.aspect_name = ref->aspect_name;
    t.index = ref->index;
  }
  if (auto rec = InnerText(block.inner, "net_recommendation")) {
    t.net_recommendation = *rec;
  }
  if (auto impact = InnerText(block.inner, "impact_level")) {
    t.impact_level = *impact;
  }
  if (auto conf = InnerText(block.inner, "confidence")) {
    t.confidence = ParseScore(*conf, "confidence");
  } else {
    t.confidence = 0.5;  // stated nowhere, assume indifference
  }
  if (auto reasoning = InnerText(block.inner, "reasoning")) {
    t.reasoning = *reasoning;
  }
  for (const char* key : {"enrollment_impact", "efficacy_signal_impact",
                          "safety_risk_impact", "mechanism_alignment",
                          "enrollment", "efficacy_signal", "safety"}) {
    if (auto v = InnerText(block.inner, key)) t.impacts[key] = *v;
  }
  return t;
}

}  // namespace

std::vector<TradeoffBlock> parse_tradeoffs(const std::string& text) {
  std::vector<TradeoffBlock> out;
  bool any_block = false;

  size_t pos = 0;
  while (auto block = FindBlock(text, "tradeoff", pos)) {
    pos = block->resume;
    any_block = true;
    TradeoffBlock t = TradeoffFromBlock(*block);
    if (t.net_recommendation.empty()) continue;  // not a verdict
    out.push_back(std::move(t));
  }

  // Dosage-focused completions use a dedicated block naming no aspect.
  pos = 0;
  while (auto block = FindBlock(text, "dosage_tradeoff", pos)) {
    pos = block->resume;
    any_block = true;
    TradeoffBlock t = TradeoffFromBlock(*block);
    t.aspect_name = "dosage";
    t.index.reset();
    if (auto rec = InnerText(block->inner, "recommendation")) {
      t.net_recommendation = *rec;
    }
    if (t.net_recommendation.empty()) continue;
    out.push_back(std::move(t));
  }

  if (!any_block && !FindBlock(text, "tradeoffs")) {
    throw NoBlockFound("no <tradeoff> block in completion");
  }
  return out;
}

std::vector<std::string> parse_augmentations(const std::string& text) {
  auto wrapper = FindBlock(text, "augmentations");
  if (!wrapper) throw NoBlockFound("no <augmentations> block in completion");
  std::vector<std::string> out;
  size_t pos = 0;
  while (auto item = FindBlock(wrapper->inner, "augmentation", pos)) {
    pos = item->resume;
    std::string value = Trim(item->inner);
    if (!value.empty()) out.push_back(std::move(value));
  }
  return out;
}

std::vector<DosageVariant> parse_dosage_augmentations(const std::string& text) {
  auto wrapper = FindBlock(text, "augmentations");
  if (!wrapper) throw NoBlockFound("no <augmentations> block in completion");
  std::vector<DosageVariant> out;
  size_t pos = 0;
  constexpr std::array<const char*, 2> kLeaves = {"dosage_modification",
                                                  "rationale"};
  while (auto item = FindBlock(wrapper->inner, "augmentation", pos)) {
    pos = item->resume;
    auto value = LeafText(item->inner, "dosage_modification", kLeaves);
    if (!value || value->empty()) continue;  // prose or plain-form item
    DosageVariant v;
    v.value = *value;
    if (auto rationale = LeafText(item->inner, "rationale", kLeaves)) {
      v.rationale = *rationale;
    }
    out.push_back(std::move(v));
  }
  return out;
}

DesignPivots parse_design_pivots(const std::string& text) {
  auto block = FindBlock(text, "design_pivots");
  if (!block) throw NoBlockFound("no <design_pivots> block in completion");
  DesignPivots pivots;
  constexpr std::array<const char*, 9> kKeys = {
      "trial_type",         "endpoint_family",
      "dose_regimen_direction", "route_change",
      "proposed_route",     "sample_size_direction",
      "design_structure",   "proposed_primary_outcome",
      "summary"};
  for (const char* key : kKeys) {
    if (auto v = LeafText(block->inner, key, kKeys)) {
      if (!v->empty()) pivots.fields[key] = *v;
    }
  }
  return pivots;
}

AdverseEventProfile parse_adverse_event_profile(const std::string& text) {
  auto block = FindBlock(text, "adverse_event_profile");
  if (!block) {
    throw NoBlockFound("no <adverse_event_profile> block in completion");
  }
  AdverseEventProfile profile;
  if (auto tox = FindBlock(block->inner, "primary_toxicity")) {
    constexpr std::array<const char*, 6> kLeaves = {
        "event",    "grade",    "incidence",
        "organ_system", "priority", "dose_dependent"};
    ToxicityProfile t;
    if (auto v = LeafText(tox->inner, "event", kLeaves)) t.event = *v;
    if (auto v = LeafText(tox->inner, "grade", kLeaves)) t.grade = *v;
    if (auto v = LeafText(tox->inner, "incidence", kLeaves)) t.incidence = *v;
    if (auto v = LeafText(tox->inner, "organ_system", kLeaves)) {
      t.organ_system = *v;
    }
    if (auto v = LeafText(tox->inner, "priority", kLeaves)) t.priority = *v;
    if (auto v = LeafText(tox->inner, "dose_dependent", kLeaves)) {
      t.dose_dependent = *v;
    }
    profile.primary_toxicity = std::move(t);
  }
  if (auto v = InnerText(block->inner, "mechanism_consistency")) {
    profile.mechanism_consistency = *v;
  }
  if (auto v = InnerText(block->inner, "root_cause_hypothesis")) {
    profile.root_cause_hypothesis = *v;
  }
  if (auto gaps = FindBlock(block->inner, "critical_gaps")) {
    size_t pos = 0;
    while (auto gap = FindBlock(gaps->inner, "gap", pos)) {
      pos = gap->resume;
      std::string value = Trim(gap->inner);
      if (!value.empty()) profile.critical_gaps.push_back(std::move(value));
    }
  }
  return profile;
}

MechanismFindings parse_mechanism(const std::string& text) {
  auto analysis = InnerText(text, "mechanism_analysis");
  if (!analysis) {
    throw NoBlockFound("no <mechanism_analysis> block in completion");
  }
  MechanismFindings findings;
  findings.analysis = *analysis;
  if (auto missing = InnerText(text, "missing_enrichment_criterion")) {
    if (!missing->empty()) findings.missing_enrichment_criterion = *missing;
  }
  return findings;
}

ValidationVerdict parse_validation_verdict(const std::string& text) {
  auto block = FindBlock(text, "validation");
  if (!block) throw NoBlockFound("no <validation> block in completion");
  auto tier = InnerText(block->inner, "tier");
  if (!tier) throw NoBlockFound("<validation> block lacks a <tier>");
  ValidationVerdict verdict;
  verdict.tier = tier_from_token(Trim(*tier));
  if (auto reasoning = InnerText(block->inner, "reasoning")) {
    verdict.reasoning = *reasoning;
  }
  return verdict;
}

TaggedValue parse_tagged(const std::string& text, TagSchema schema) {
  switch (schema) {
    case TagSchema::Classification: return parse_classification(text);
    case TagSchema::Tradeoff: return parse_tradeoffs(text);
    case TagSchema::Augmentations: return parse_augmentations(text);
    case TagSchema::DosageAugmentations: return parse_dosage_augmentations(text);
    case TagSchema::DesignPivots: return parse_design_pivots(text);
    case TagSchema::AdverseEventProfile: return parse_adverse_event_profile(text);
  }
  throw NoBlockFound("unknown schema");
}

AgentOutputDocument parse_agent_output(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedDocument(std::string("invalid pipeline output: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("trial_data")) {
    throw MissingField("trial_data");
  }
  AgentOutputDocument out;
  out.trial = protocol_from_json(doc.at("trial_data"));

  if (doc.contains("aspect_li")) {
    for (const auto& lane : doc.at("aspect_li")) {
      AspectPlan plan;
      plan.target.aspect_name = lane.at("aspect_name").get<std::string>();
      if (lane.contains("aspect_index") && !lane.at("aspect_index").is_null()) {
        plan.target.index = lane.at("aspect_index").get<int>();
      }
      if (lane.contains("original_value") &&
          lane.at("original_value").is_string()) {
        plan.original_value = lane.at("original_value").get<std::string>();
      }
      if (lane.contains("analysis")) {
        const auto& analysis = lane.at("analysis");
        if (analysis.contains("action_type")) {
          plan.action =
              action_from_token(analysis.at("action_type").get<std::string>());
        }
        if (analysis.contains("strategy")) {
          plan.strategy = analysis.at("strategy").get<std::string>();
        }
        if (analysis.contains("confidence")) {
          plan.confidence = analysis.at("confidence").get<double>();
        }
        if (analysis.contains("impact_level")) {
          plan.impact_level = analysis.at("impact_level").get<std::string>();
        }
      }
      if (lane.contains("augment") &&
          lane.at("augment").contains("augment_val_li")) {
        for (const auto& value : lane.at("augment").at("augment_val_li")) {
          plan.values.push_back(value.get<std::string>());
        }
      }
      out.plans.push_back(std::move(plan));
    }
  }
  return out;
}

}  // namespace trialmend
