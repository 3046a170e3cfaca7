#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trialmend/memory.hpp"
#include "trialmend/modification.hpp"
#include "trialmend/oracle.hpp"
#include "trialmend/protocol.hpp"
#include "trialmend/reward.hpp"

namespace trialmend {

/// One decision variable of the search: a slot plus the validated options
/// competing for it. Leaving the slot unchanged (no-op) is always implied and
/// never stored as an option.
struct ChoiceGroup {
  SlotKey slot;
  std::vector<Augmentation> options;  // id-sorted, deduplicated

  double max_confidence() const;
};

struct BuildGroupsResult {
  std::vector<ChoiceGroup> groups;
  /// Human-readable notes for dropped pool entries (stale index, value
  /// collision with a fresh option, and similar).
  std::vector<std::string> notes;
};

/// Folds fresh validated augmentations and (optionally) pooled augmentations
/// from earlier runs into choice groups against `base`. Pool entries naming a
/// list index are re-anchored by locating their recorded original text in the
/// current list; entries whose text no longer exists are dropped with a note.
BuildGroupsResult build_groups(const std::vector<Augmentation>& fresh,
                               const std::vector<PoolEntry>* pool,
                               const TrialProtocol& base);

/// Size of the full combination space: product of (options + 1) per group,
/// saturating at UINT64_MAX instead of overflowing.
std::uint64_t estimate_space(const std::vector<ChoiceGroup>& groups);

/// One evaluated point of the search space.
struct CandidateResult {
  std::vector<std::string> augmentation_ids;  // sorted; empty = no-op
  std::string protocol_hash;
  double score = 0.0;
};

enum class SearchStrategy { Exhaustive, Beam };

struct ExplorationResult {
  SearchStrategy strategy = SearchStrategy::Exhaustive;
  std::uint64_t space_size = 1;
  /// Every scored candidate, ranked score descending with ties broken by
  /// protocol hash then by id list. Always contains the no-op candidate when
  /// it was scorable.
  std::vector<CandidateResult> explored;
  int unscorable = 0;  // candidates the oracle refused, excluded from stats
  std::optional<CandidateResult> best;  // empty only if nothing scored
  double r_max = 0.0;  // best score minus the original protocol's score
  std::vector<RewardRecord> rewards;  // attribution over `explored`
};

struct SearchContext {
  const TrialProtocol* base = nullptr;  // incumbent the candidates extend
  double original_score = 0.0;          // p0 of the run's starting protocol
  OutcomeOracle* oracle = nullptr;
  ScoreCache* cache = nullptr;
};

/// Scores every combination. Use when estimate_space(groups) is small.
ExplorationResult exhaustive_search(const SearchContext& ctx,
                                    const std::vector<ChoiceGroup>& groups);

/// Greedy beam over groups ordered by descending option confidence. Keeps the
/// `width` best partial selections per depth; explored = every scored
/// full-depth candidate plus all retained partials. With width >= space this
/// degenerates to exhaustive search.
ExplorationResult beam_search(const SearchContext& ctx,
                              const std::vector<ChoiceGroup>& groups,
                              int width);

/// Marginal reward per augmentation over a scored candidate set: mean score
/// with the augmentation minus mean score without it. Sorted by id.
std::vector<RewardRecord> attribute_rewards(
    const std::vector<CandidateResult>& explored,
    const std::map<std::string, Augmentation>& augs_by_id);

}  // namespace trialmend
