#pragma once

#include <nlohmann/json.hpp>

#include <compare>
#include <optional>
#include <string>
#include <vector>

#include "trialmend/protocol.hpp"

namespace trialmend {

enum class ActionType { Delete, Modify, Add };

/// Judgement assigned to a proposed modification. Only Excellent/Good/
/// Moderate members may reach search; Banned members are contraindicated and
/// poison any set containing them.
enum class ValidationTier { Pending, Excellent, Good, Moderate, Bad, Banned };

std::string to_token(ActionType a);
std::string to_token(ValidationTier v);
ActionType action_from_token(const std::string& token);
ValidationTier tier_from_token(const std::string& token);

/// Design-pattern label attached to eligibility modifications by the
/// analysis stage. String aspects (dosage, outcome) carry no category.
enum class PatternCategory {
  ParticipationBarrier,
  SafetyExclusion,
  SelectionCriterion,
  EnrichmentCriterion,
};

std::string to_token(PatternCategory c);
PatternCategory category_from_token(const std::string& token);

/// One concrete proposed modification of one protocol slot.
///
/// Invariants:
///   Delete  => target has an index (list entry) and no value
///   Modify  => value present (index present iff the aspect is a list)
///   Add     => value present, no index (appends to a list aspect)
struct Augmentation {
  std::string id;  // short content hash of (target, action, value)
  AspectRef target;
  ActionType action = ActionType::Modify;
  std::optional<std::string> value;
  std::string strategy;
  double confidence = 0.0;
  ValidationTier validation = ValidationTier::Pending;

  // Internal bookkeeping, not part of the exchange format.
  std::optional<PatternCategory> category;
  // Text of the targeted list entry at mint time; lets a later iteration
  // detect that the entry has moved or disappeared.
  std::optional<std::string> original_value;

  bool operator==(const Augmentation&) const = default;
};

/// Builds an augmentation and fills in its stable id. Throws
/// MalformedDocument when the action/value/index shape is inconsistent.
Augmentation make_augmentation(AspectRef target, ActionType action,
                               std::optional<std::string> value,
                               std::string strategy, double confidence);

/// Identity of the protocol slot an augmentation occupies. Indexed entries of
/// a list, the whole value of a string aspect, and each distinct Add are
/// separate slots — so several Adds to one list can coexist in a candidate.
struct SlotKey {
  enum class Kind { Indexed, Whole, Added };

  std::string aspect_name;
  Kind kind = Kind::Whole;
  int index = 0;        // Indexed only
  std::string add_id;   // Added only

  auto operator<=>(const SlotKey&) const = default;
};

std::string to_string(const SlotKey& slot);
SlotKey slot_of(const Augmentation& aug);

/// A set of augmentations applied together to one base protocol.
/// Members are kept sorted by id; slot-disjointness is checked by
/// `check_conflicts`/`apply` rather than at insertion.
class ModificationSet {
 public:
  ModificationSet() = default;
  explicit ModificationSet(std::vector<Augmentation> members);

  void add(Augmentation aug);
  const std::vector<Augmentation>& members() const { return members_; }
  bool empty() const { return members_.empty(); }
  std::size_t size() const { return members_.size(); }

  /// Sorted member ids; doubles as a cheap set identity.
  std::vector<std::string> ids() const;

  bool operator==(const ModificationSet&) const = default;

 private:
  std::vector<Augmentation> members_;  // sorted by id
};

struct ConflictNote {
  std::string slot;
  std::vector<std::string> augmentation_ids;
  std::string reason;  // "conflicting_slot" | "index_out_of_range" | "banned_member"
};

/// Returns every reason `apply(base, mods)` would refuse; empty means apply
/// succeeds.
std::vector<ConflictNote> check_conflicts(const TrialProtocol& base,
                                          const ModificationSet& mods);

/// Applies a modification set to a base protocol and returns the rewritten
/// protocol. Indices refer to base positions throughout: deletes do not shift
/// what sibling modifications mean, only the output list. Adds append at the
/// end in id order. Throws ConflictingSlot / IndexOutOfRange / BannedMember.
TrialProtocol apply(const TrialProtocol& base, const ModificationSet& mods);

/// Exchange form: array of {id, aspect_name, index?, action, value?,
/// confidence, validation}.
nlohmann::json modification_set_to_json(const ModificationSet& mods);
ModificationSet modification_set_from_json(const nlohmann::json& doc);

}  // namespace trialmend
