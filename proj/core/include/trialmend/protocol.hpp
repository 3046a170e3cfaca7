#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trialmend {

enum class Phase { Phase1, Phase2, Phase3, Phase4 };

enum class FailureMode { Enrollment, Safety, Efficacy };

std::string to_token(Phase p);
std::string to_token(FailureMode m);
Phase phase_from_token(const std::string& token);
FailureMode failure_mode_from_token(const std::string& token);

/// The four protocol aspects the engine is allowed to touch. The first two
/// are lists of criterion strings, the last two are single strings.
inline constexpr std::string_view kInclusionCriteria =
    "eligibility/inclusion_criteria";
inline constexpr std::string_view kExclusionCriteria =
    "eligibility/exclusion_criteria";
inline constexpr std::string_view kDosage = "dosage";
inline constexpr std::string_view kTargetPrimaryOutcome =
    "target_primary_outcome";

inline constexpr std::array<std::string_view, 4> kModifiableAspects = {
    kInclusionCriteria,
    kExclusionCriteria,
    kDosage,
    kTargetPrimaryOutcome,
};

enum class AspectKind { List, String };

bool is_modifiable_aspect(std::string_view name);
AspectKind aspect_kind(std::string_view name);  // throws BadEnum for unknown names

/// Address of a modifiable piece of a protocol: a whole string aspect, or one
/// positional entry of a list aspect. Criterion identity is positional — an
/// index always refers to a position in the list it was minted against.
struct AspectRef {
  std::string aspect_name;
  std::optional<int> index;  // present only for list-aspect entries

  bool operator==(const AspectRef&) const = default;
};

std::string to_string(const AspectRef& ref);

/// One registered trial protocol. Values are treated as immutable once
/// constructed; every engine step that "changes" a protocol produces a new
/// value. Unknown document fields ride along in `extras` so that documents
/// round-trip without loss.
struct TrialProtocol {
  std::string nct_id;
  Phase phase = Phase::Phase2;
  std::string condition;
  std::string intervention_name;
  FailureMode failure_reason = FailureMode::Enrollment;
  std::string adverse_events;
  std::vector<std::string> inclusion_criteria;
  std::vector<std::string> exclusion_criteria;
  std::string dosage;
  std::string target_primary_outcome;
  nlohmann::json extras = nlohmann::json::object();

  const std::vector<std::string>& criteria(std::string_view aspect) const;
  const std::string& text_aspect(std::string_view aspect) const;
  std::vector<std::string>& criteria(std::string_view aspect);
  std::string& text_aspect(std::string_view aspect);

  bool operator==(const TrialProtocol&) const = default;
};

/// 256-bit content digest of a canonicalized protocol, as lowercase hex.
using CanonicalHash = std::string;

/// Parses a protocol document (JSON text). All ten canonical keys are
/// required; empty lists and empty string values are legal, but criterion
/// strings inside lists are trimmed and blank entries dropped.
/// Throws MalformedDocument / MissingField / BadEnum.
TrialProtocol parse_protocol(const std::string& text);
TrialProtocol protocol_from_json(const nlohmann::json& doc);

/// Deterministic byte serialization: one-line JSON with lexicographically
/// sorted keys. Equal protocols canonicalize to equal bytes and
/// parse(canonicalize(p)) == p.
std::string canonicalize(const TrialProtocol& p);
nlohmann::json protocol_to_json(const TrialProtocol& p);

/// Digest of the canonical bytes. Any field change changes the digest.
CanonicalHash hash_protocol(const TrialProtocol& p);

TrialProtocol load_protocol_file(const std::string& path);

}  // namespace trialmend
