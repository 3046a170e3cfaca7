#include "trialmend/modification.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "trialmend/errors.hpp"
#include "trialmend/hash.hpp"

namespace trialmend {

std::string to_token(ActionType a) {
  switch (a) {
    case ActionType::Delete: return "delete";
    case ActionType::Modify: return "modify";
    case ActionType::Add: return "add";
  }
  return "modify";
}

std::string to_token(ValidationTier v) {
  switch (v) {
    case ValidationTier::Pending: return "pending";
    case ValidationTier::Excellent: return "excellent";
    case ValidationTier::Good: return "good";
    case ValidationTier::Moderate: return "moderate";
    case ValidationTier::Bad: return "bad";
    case ValidationTier::Banned: return "banned";
  }
  return "pending";
}

ActionType action_from_token(const std::string& token) {
  if (token == "delete" || token == "DELETE") return ActionType::Delete;
  if (token == "modify" || token == "MODIFY") return ActionType::Modify;
  if (token == "add" || token == "ADD") return ActionType::Add;
  throw BadEnum("action", token);
}

ValidationTier tier_from_token(const std::string& token) {
  if (token == "pending" || token == "PENDING") return ValidationTier::Pending;
  if (token == "excellent" || token == "EXCELLENT") return ValidationTier::Excellent;
  if (token == "good" || token == "GOOD") return ValidationTier::Good;
  if (token == "moderate" || token == "MODERATE") return ValidationTier::Moderate;
  if (token == "bad" || token == "BAD") return ValidationTier::Bad;
  if (token == "banned" || token == "BANNED") return ValidationTier::Banned;
  throw BadEnum("validation", token);
}

std::string to_token(PatternCategory c) {
  switch (c) {
    case PatternCategory::ParticipationBarrier: return "PARTICIPATION_BARRIER";
    case PatternCategory::SafetyExclusion: return "SAFETY_EXCLUSION";
    case PatternCategory::SelectionCriterion: return "SELECTION_CRITERION";
    case PatternCategory::EnrichmentCriterion: return "ENRICHMENT_CRITERION";
  }
  return "SELECTION_CRITERION";
}

PatternCategory category_from_token(const std::string& token) {
  if (token == "PARTICIPATION_BARRIER") return PatternCategory::ParticipationBarrier;
  if (token == "SAFETY_EXCLUSION") return PatternCategory::SafetyExclusion;
  if (token == "SELECTION_CRITERION") return PatternCategory::SelectionCriterion;
  if (token == "ENRICHMENT_CRITERION") return PatternCategory::EnrichmentCriterion;
  throw BadEnum("category", token);
}

namespace {

void CheckShape(const AspectRef& target, ActionType action,
                const std::optional<std::string>& value) {
  if (!is_modifiable_aspect(target.aspect_name)) {
    throw BadEnum("aspect_name", target.aspect_name);
  }
  const AspectKind kind = aspect_kind(target.aspect_name);
  switch (action) {
    case ActionType::Delete:
      if (kind != AspectKind::List || !target.index || value) {
        throw MalformedDocument(
            "delete must target a list entry and carry no value: " +
            to_string(target));
      }
      break;
    case ActionType::Modify:
      if (!value) {
        throw MalformedDocument("modify must carry a value: " +
                                to_string(target));
      }
      if ((kind == AspectKind::List) != target.index.has_value()) {
        throw MalformedDocument(
            "modify index must be present exactly for list aspects: " +
            to_string(target));
      }
      break;
    case ActionType::Add:
      if (kind != AspectKind::List || target.index || !value) {
        throw MalformedDocument(
            "add must target a list aspect without an index and carry a "
            "value: " +
            to_string(target));
      }
      break;
  }
  if (target.index && *target.index < 0) {
    throw MalformedDocument("negative index: " + to_string(target));
  }
}

}  // namespace

Augmentation make_augmentation(AspectRef target, ActionType action,
                               std::optional<std::string> value,
                               std::string strategy, double confidence) {
  CheckShape(target, action, value);
  Augmentation aug;
  aug.target = std::move(target);
  aug.action = action;
  aug.value = std::move(value);
  aug.strategy = std::move(strategy);
  aug.confidence = confidence;
  // The id covers exactly what the modification does — not why, and not how
  // sure anyone is — so identical proposals from different routes merge.
  std::string key = aug.target.aspect_name;
  key.push_back('\x1f');
  if (aug.target.index) key += std::to_string(*aug.target.index);
  key.push_back('\x1f');
  key += to_token(aug.action);
  key.push_back('\x1f');
  if (aug.value) key += *aug.value;
  aug.id = short_digest(key);
  return aug;
}

std::string to_string(const SlotKey& slot) {
  switch (slot.kind) {
    case SlotKey::Kind::Indexed:
      return slot.aspect_name + "[" + std::to_string(slot.index) + "]";
    case SlotKey::Kind::Whole:
      return slot.aspect_name;
    case SlotKey::Kind::Added:
      return slot.aspect_name + "+" + slot.add_id;
  }
  return slot.aspect_name;
}

SlotKey slot_of(const Augmentation& aug) {
  SlotKey slot;
  slot.aspect_name = aug.target.aspect_name;
  if (aug.action == ActionType::Add) {
    slot.kind = SlotKey::Kind::Added;
    slot.add_id = aug.id;
  } else if (aug.target.index) {
    slot.kind = SlotKey::Kind::Indexed;
    slot.index = *aug.target.index;
  } else {
    slot.kind = SlotKey::Kind::Whole;
  }
  return slot;
}

ModificationSet::ModificationSet(std::vector<Augmentation> members)
    : members_(std::move(members)) {
  std::sort(members_.begin(), members_.end(),
            [](const Augmentation& a, const Augmentation& b) {
              return a.id < b.id;
            });
}

void ModificationSet::add(Augmentation aug) {
  auto pos = std::lower_bound(members_.begin(), members_.end(), aug.id,
                              [](const Augmentation& m, const std::string& id) {
                                return m.id < id;
                              });
  members_.insert(pos, std::move(aug));
}

std::vector<std::string> ModificationSet::ids() const {
  std::vector<std::string> out;
  out.reserve(members_.size());
  for (const auto& m : members_) out.push_back(m.id);
  return out;
}

std::vector<ConflictNote> check_conflicts(const TrialProtocol& base,
                                          const ModificationSet& mods) {
  std::vector<ConflictNote> notes;
  std::map<SlotKey, std::vector<std::string>> by_slot;
  for (const auto& m : mods.members()) {
    by_slot[slot_of(m)].push_back(m.id);

    if (m.validation == ValidationTier::Banned) {
      notes.push_back({to_string(slot_of(m)), {m.id}, "banned_member"});
    }
    if (m.target.index) {
      const auto& list = base.criteria(m.target.aspect_name);
      if (*m.target.index >= static_cast<int>(list.size())) {
        notes.push_back({to_string(slot_of(m)), {m.id}, "index_out_of_range"});
      }
    }
  }
  for (const auto& [slot, ids] : by_slot) {
    if (ids.size() > 1) {
      notes.push_back({to_string(slot), ids, "conflicting_slot"});
    }
  }
  return notes;
}

TrialProtocol apply(const TrialProtocol& base, const ModificationSet& mods) {
  for (const auto& note : check_conflicts(base, mods)) {
    std::string what = note.reason + " at " + note.slot;
    if (note.reason == "conflicting_slot") throw ConflictingSlot(what);
    if (note.reason == "index_out_of_range") throw IndexOutOfRange(what);
    if (note.reason == "banned_member") throw BannedMember(what);
  }

  TrialProtocol out = base;
  for (const auto& aspect : kModifiableAspects) {
    const std::string name(aspect);
    if (aspect_kind(name) == AspectKind::String) {
      for (const auto& m : mods.members()) {
        if (m.target.aspect_name == name) out.text_aspect(name) = *m.value;
      }
      continue;
    }

    std::set<int> deleted;
    std::map<int, std::string> replaced;
    std::vector<std::string> added;  // members_ are id-sorted already
    for (const auto& m : mods.members()) {
      if (m.target.aspect_name != name) continue;
      switch (m.action) {
        case ActionType::Delete: deleted.insert(*m.target.index); break;
        case ActionType::Modify: replaced[*m.target.index] = *m.value; break;
        case ActionType::Add: added.push_back(*m.value); break;
      }
    }
    if (deleted.empty() && replaced.empty() && added.empty()) continue;

    const auto& src = base.criteria(name);
    std::vector<std::string> rebuilt;
    rebuilt.reserve(src.size() + added.size());
    for (int i = 0; i < static_cast<int>(src.size()); ++i) {
      if (deleted.count(i)) continue;
      auto rep = replaced.find(i);
      rebuilt.push_back(rep != replaced.end() ? rep->second : src[i]);
    }
    for (auto& value : added) rebuilt.push_back(std::move(value));
    out.criteria(name) = std::move(rebuilt);
  }
  return out;
}

nlohmann::json modification_set_to_json(const ModificationSet& mods) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : mods.members()) {
    nlohmann::json item = nlohmann::json::object();
    item["id"] = m.id;
    item["aspect_name"] = m.target.aspect_name;
    if (m.target.index) item["index"] = *m.target.index;
    item["action"] = to_token(m.action);
    if (m.value) item["value"] = *m.value;
    item["confidence"] = m.confidence;
    item["validation"] = to_token(m.validation);
    arr.push_back(std::move(item));
  }
  return arr;
}

ModificationSet modification_set_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) {
    throw MalformedDocument("modification set must be a JSON array");
  }
  std::vector<Augmentation> members;
  members.reserve(doc.size());
  for (const auto& item : doc) {
    if (!item.is_object()) {
      throw MalformedDocument("modification entry must be an object");
    }
    AspectRef ref;
    if (!item.contains("aspect_name")) throw MissingField("aspect_name");
    ref.aspect_name = item.at("aspect_name").get<std::string>();
    if (item.contains("index")) ref.index = item.at("index").get<int>();
    if (!item.contains("action")) throw MissingField("action");
    ActionType action = action_from_token(item.at("action").get<std::string>());
    std::optional<std::string> value;
    if (item.contains("value")) value = item.at("value").get<std::string>();
    double confidence =
        item.contains("confidence") ? item.at("confidence").get<double>() : 0.0;

    Augmentation aug = make_augmentation(std::move(ref), action,
                                         std::move(value), "", confidence);
    if (item.contains("validation")) {
      aug.validation = tier_from_token(item.at("validation").get<std::string>());
    }
    if (item.contains("id") && item.at("id").get<std::string>() != aug.id) {
      throw MalformedDocument("modification id does not match its content: " +
                              item.at("id").get<std::string>());
    }
    members.push_back(std::move(aug));
  }
  return ModificationSet(std::move(members));
}

}  // namespace trialmend
