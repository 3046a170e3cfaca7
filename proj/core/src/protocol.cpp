#include "trialmend/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "trialmend/errors.hpp"
#include "trialmend/hash.hpp"

namespace trialmend {

namespace {

std::string Trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string Lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Document keys, in the shape registry exports use.
constexpr const char* kNctId = "nct_id";
constexpr const char* kPhase = "phase";
constexpr const char* kCondition = "condition";
constexpr const char* kIntervention = "intervention/intervention_name";
constexpr const char* kFailureReason = "failure_reason";
constexpr const char* kAdverseEvents = "adverse_events";
constexpr const char* kInclusion = "eligibility/inclusion_criteria";
constexpr const char* kExclusion = "eligibility/exclusion_criteria";
constexpr const char* kDosageField = "dosage";
constexpr const char* kOutcome = "target_primary_outcome";

constexpr std::array<const char*, 10> kRequiredKeys = {
    kNctId,         kPhase,     kCondition, kIntervention, kFailureReason,
    kAdverseEvents, kInclusion, kExclusion, kDosageField,  kOutcome,
};

const nlohmann::json& RequireKey(const nlohmann::json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw MissingField(key);
  return *it;
}

std::string RequireString(const nlohmann::json& doc, const char* key) {
  const auto& v = RequireKey(doc, key);
  if (!v.is_string()) {
    throw MalformedDocument(std::string(key) + " must be a string");
  }
  return v.get<std::string>();
}

std::vector<std::string> RequireStringList(const nlohmann::json& doc,
                                           const char* key) {
  const auto& v = RequireKey(doc, key);
  if (!v.is_array()) {
    throw MalformedDocument(std::string(key) + " must be an array of strings");
  }
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& item : v) {
    if (!item.is_string()) {
      throw MalformedDocument(std::string(key) +
                              " must contain only strings");
    }
    // Criterion strings must be non-empty after trimming; blank entries in
    // registry exports are noise, not content.
    std::string trimmed = Trim(item.get<std::string>());
    if (!trimmed.empty()) out.push_back(std::move(trimmed));
  }
  return out;
}

}  // namespace

std::string to_token(Phase p) {
  switch (p) {
    case Phase::Phase1: return "phase1";
    case Phase::Phase2: return "phase2";
    case Phase::Phase3: return "phase3";
    case Phase::Phase4: return "phase4";
  }
  return "phase2";
}

std::string to_token(FailureMode m) {
  switch (m) {
    case FailureMode::Enrollment: return "enrollment";
    case FailureMode::Safety: return "safety";
    case FailureMode::Efficacy: return "efficacy";
  }
  return "enrollment";
}

Phase phase_from_token(const std::string& token) {
  // Accept both the canonical token ("phase2") and the human spellings that
  // registry exports carry ("Phase 2", "PHASE_2").
  std::string t = Lower(Trim(token));
  std::string compact;
  for (char c : t) {
    if (c != ' ' && c != '_' && c != '-') compact.push_back(c);
  }
  if (compact == "phase1" || compact == "1") return Phase::Phase1;
  if (compact == "phase2" || compact == "2") return Phase::Phase2;
  if (compact == "phase3" || compact == "3") return Phase::Phase3;
  if (compact == "phase4" || compact == "4") return Phase::Phase4;
  throw BadEnum("phase", token);
}

FailureMode failure_mode_from_token(const std::string& token) {
  std::string t = Lower(Trim(token));
  if (t == "enrollment") return FailureMode::Enrollment;
  if (t == "safety") return FailureMode::Safety;
  if (t == "efficacy") return FailureMode::Efficacy;
  throw BadEnum("failure_reason", token);
}

bool is_modifiable_aspect(std::string_view name) {
  return std::find(kModifiableAspects.begin(), kModifiableAspects.end(),
                   name) != kModifiableAspects.end();
}

AspectKind aspect_kind(std::string_view name) {
  if (name == kModifiableAspects[0] || name == kModifiableAspects[1]) {
    return AspectKind::List;
  }
  if (name == kModifiableAspects[2] || name == kModifiableAspects[3]) {
    return AspectKind::String;
  }
  throw BadEnum("aspect_name", std::string(name));
}

std::string to_string(const AspectRef& ref) {
  if (ref.index) return ref.aspect_name + "[" + std::to_string(*ref.index) + "]";
  return ref.aspect_name;
}

const std::vector<std::string>& TrialProtocol::criteria(
    std::string_view aspect) const {
  if (aspect == kModifiableAspects[0]) return inclusion_criteria;
  if (aspect == kModifiableAspects[1]) return exclusion_criteria;
  throw BadEnum("list aspect", std::string(aspect));
}

std::vector<std::string>& TrialProtocol::criteria(std::string_view aspect) {
  return const_cast<std::vector<std::string>&>(
      static_cast<const TrialProtocol&>(*this).criteria(aspect));
}

const std::string& TrialProtocol::text_aspect(std::string_view aspect) const {
  if (aspect == kModifiableAspects[2]) return dosage;
  if (aspect == kModifiableAspects[3]) return target_primary_outcome;
  throw BadEnum("string aspect", std::string(aspect));
}

std::string& TrialProtocol::text_aspect(std::string_view aspect) {
  return const_cast<std::string&>(
      static_cast<const TrialProtocol&>(*this).text_aspect(aspect));
}

TrialProtocol protocol_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw MalformedDocument("protocol document must be a JSON object");
  }
  TrialProtocol p;
  p.nct_id = RequireString(doc, kNctId);
  p.phase = phase_from_token(RequireString(doc, kPhase));
  p.condition = RequireString(doc, kCondition);
  p.intervention_name = RequireString(doc, kIntervention);
  p.failure_reason = failure_mode_from_token(RequireString(doc, kFailureReason));
  p.adverse_events = RequireString(doc, kAdverseEvents);
  p.inclusion_criteria = RequireStringList(doc, kInclusion);
  p.exclusion_criteria = RequireStringList(doc, kExclusion);
  p.dosage = RequireString(doc, kDosageField);
  p.target_primary_outcome = RequireString(doc, kOutcome);

  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (std::find(kRequiredKeys.begin(), kRequiredKeys.end(), it.key()) ==
        kRequiredKeys.end()) {
      p.extras[it.key()] = it.value();
    }
  }
  return p;
}

TrialProtocol parse_protocol(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedDocument(std::string("invalid protocol document: ") +
                            e.what());
  }
  return protocol_from_json(doc);
}

nlohmann::json protocol_to_json(const TrialProtocol& p) {
  // nlohmann orders object keys lexicographically, which the canonical form
  // relies on.
  nlohmann::json doc = nlohmann::json::object();
  doc[kNctId] = p.nct_id;
  doc[kPhase] = to_token(p.phase);
  doc[kCondition] = p.condition;
  doc[kIntervention] = p.intervention_name;
  doc[kFailureReason] = to_token(p.failure_reason);
  doc[kAdverseEvents] = p.adverse_events;
  doc[kInclusion] = p.inclusion_criteria;
  doc[kExclusion] = p.exclusion_criteria;
  doc[kDosageField] = p.dosage;
  doc[kOutcome] = p.target_primary_outcome;
  for (auto it = p.extras.begin(); it != p.extras.end(); ++it) {
    doc[it.key()] = it.value();
  }
  return doc;
}

std::string canonicalize(const TrialProtocol& p) {
  return protocol_to_json(p).dump();
}

CanonicalHash hash_protocol(const TrialProtocol& p) {
  return sha256_hex(canonicalize(p));
}

TrialProtocol load_protocol_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedDocument("cannot open protocol file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_protocol(buf.str());
}

}  // namespace trialmend
