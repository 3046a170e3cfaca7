#include "trialmend/explore.hpp"

#include <algorithm>
#include <limits>

#include "trialmend/errors.hpp"

namespace trialmend {

namespace {

// Ranking shared by retention, explored output, and best-pick: score
// descending, then protocol hash, then id list, so equal-score candidates
// resolve the same way everywhere.
bool RankBefore(const CandidateResult& a, const CandidateResult& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.protocol_hash != b.protocol_hash) return a.protocol_hash < b.protocol_hash;
  return a.augmentation_ids < b.augmentation_ids;
}

std::map<std::string, const Augmentation*> IndexOptions(
    const std::vector<ChoiceGroup>& groups) {
  std::map<std::string, const Augmentation*> out;
  for (const auto& g : groups) {
    for (const auto& opt : g.options) out.emplace(opt.id, &opt);
  }
  return out;
}

/// Evaluates one selection of options. Returns false when the oracle refuses
/// the candidate (caller counts it as unscorable).
bool Evaluate(const SearchContext& ctx,
              const std::vector<const Augmentation*>& selection,
              CandidateResult& out) {
  ModificationSet mods;
  for (const Augmentation* a : selection) mods.add(*a);
  TrialProtocol derived = apply(*ctx.base, mods);
  out.augmentation_ids = mods.ids();
  out.protocol_hash = hash_protocol(derived);
  try {
    out.score = cached_score_by_hash(derived, out.protocol_hash, *ctx.oracle,
                                     *ctx.cache);
  } catch (const OracleError&) {
    return false;
  }
  return true;
}

ExplorationResult FinishResult(SearchStrategy strategy, std::uint64_t space,
                               std::vector<CandidateResult> explored,
                               int unscorable, const SearchContext& ctx,
                               const std::vector<ChoiceGroup>& groups) {
  ExplorationResult res;
  res.strategy = strategy;
  res.space_size = space;
  std::sort(explored.begin(), explored.end(), RankBefore);
  res.explored = std::move(explored);
  res.unscorable = unscorable;
  if (!res.explored.empty()) {
    res.best = res.explored.front();
    res.r_max = res.best->score - ctx.original_score;
  }
  std::map<std::string, Augmentation> augs;
  for (const auto& g : groups) {
    for (const auto& opt : g.options) augs.emplace(opt.id, opt);
  }
  res.rewards = attribute_rewards(res.explored, augs);
  return res;
}

}  // namespace

double ChoiceGroup::max_confidence() const {
  double best = 0.0;
  for (const auto& o : options) best = std::max(best, o.confidence);
  return best;
}

BuildGroupsResult build_groups(const std::vector<Augmentation>& fresh,
                               const std::vector<PoolEntry>* pool,
                               const TrialProtocol& base) {
  BuildGroupsResult out;
  std::map<SlotKey, std::vector<Augmentation>> by_slot;

  for (const auto& aug : fresh) {
    auto& options = by_slot[slot_of(aug)];
    bool dup = std::any_of(options.begin(), options.end(),
                           [&aug](const Augmentation& o) { return o.id == aug.id; });
    if (!dup) options.push_back(aug);
  }

  if (pool != nullptr) {
    for (const PoolEntry& entry : *pool) {
      const Augmentation& a = entry.aug;
      Augmentation merged = a;
      if (a.target.index.has_value()) {
        // Indexed entries re-anchor on the text they originally targeted;
        // list edits since the mint run may have moved or removed it.
        if (!a.original_value.has_value()) {
          out.notes.push_back("pool entry " + a.id +
                              " dropped: no original text recorded");
          continue;
        }
        if (!is_modifiable_aspect(a.target.aspect_name) ||
            aspect_kind(a.target.aspect_name) != AspectKind::List) {
          out.notes.push_back("pool entry " + a.id +
                              " dropped: not a list aspect");
          continue;
        }
        const std::vector<std::string>& items = base.criteria(a.target.aspect_name);
        auto found = std::find(items.begin(), items.end(), *a.original_value);
        if (found == items.end()) {
          out.notes.push_back("pool entry " + a.id +
                              " dropped: original text not in current protocol");
          continue;
        }
        int index = static_cast<int>(found - items.begin());
        merged = make_augmentation(
            AspectRef{a.target.aspect_name, index}, a.action, a.value,
            a.strategy, a.confidence);
        merged.validation = a.validation;
        merged.category = a.category;
        merged.original_value = a.original_value;
      } else if (a.action == ActionType::Modify) {
        // Whole-aspect modification merges as-is against any protocol.
        merged = a;
      }
      auto& options = by_slot[slot_of(merged)];
      bool dup = std::any_of(
          options.begin(), options.end(),
          [&merged](const Augmentation& o) { return o.id == merged.id; });
      if (dup) {
        out.notes.push_back("pool entry " + a.id +
                            " skipped: duplicates a fresh option");
        continue;
      }
      options.push_back(std::move(merged));
    }
  }

  for (auto& [slot, options] : by_slot) {
    std::sort(options.begin(), options.end(),
              [](const Augmentation& x, const Augmentation& y) {
                return x.id < y.id;
              });
    out.groups.push_back(ChoiceGroup{slot, std::move(options)});
  }
  return out;
}

std::uint64_t estimate_space(const std::vector<ChoiceGroup>& groups) {
  std::uint64_t space = 1;
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  for (const auto& g : groups) {
    std::uint64_t branch = static_cast<std::uint64_t>(g.options.size()) + 1;
    if (space > kMax / branch) return kMax;
    space *= branch;
  }
  return space;
}

ExplorationResult exhaustive_search(const SearchContext& ctx,
                                    const std::vector<ChoiceGroup>& groups) {
  std::vector<CandidateResult> explored;
  int unscorable = 0;

  // Odometer over option indices, -1 meaning "leave the slot unchanged".
  std::vector<int> choice(groups.size(), -1);
  while (true) {
    std::vector<const Augmentation*> selection;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (choice[i] >= 0) selection.push_back(&groups[i].options[choice[i]]);
    }
    CandidateResult cand;
    if (Evaluate(ctx, selection, cand)) {
      explored.push_back(std::move(cand));
    } else {
      ++unscorable;
    }

    std::size_t pos = 0;
    while (pos < groups.size()) {
      if (++choice[pos] < static_cast<int>(groups[pos].options.size())) break;
      choice[pos] = -1;
      ++pos;
    }
    if (pos == groups.size()) break;
  }

  return FinishResult(SearchStrategy::Exhaustive, estimate_space(groups),
                      std::move(explored), unscorable, ctx, groups);
}

ExplorationResult beam_search(const SearchContext& ctx,
                              const std::vector<ChoiceGroup>& groups,
                              int width) {
  if (width < 1) width = 1;

  // High-confidence slots decide early so the retained partials concentrate
  // on the changes the analysis believed in most.
  std::vector<const ChoiceGroup*> ordered;
  ordered.reserve(groups.size());
  for (const auto& g : groups) ordered.push_back(&g);
  std::sort(ordered.begin(), ordered.end(),
            [](const ChoiceGroup* a, const ChoiceGroup* b) {
              double ca = a->max_confidence();
              double cb = b->max_confidence();
              if (ca != cb) return ca > cb;
              return a->slot < b->slot;
            });

  struct Partial {
    std::vector<const Augmentation*> selection;
    CandidateResult result;
  };

  std::map<std::vector<std::string>, CandidateResult> explored_by_ids;
  std::map<std::vector<std::string>, bool> seen;  // scorable or not
  int unscorable = 0;

  auto evaluate_unique = [&](const std::vector<const Augmentation*>& selection,
                             CandidateResult& out) -> bool {
    ModificationSet probe;
    for (const Augmentation* a : selection) probe.add(*a);
    std::vector<std::string> key = probe.ids();
    auto it = seen.find(key);
    if (it != seen.end() && !it->second) return false;  // known unscorable
    bool ok = Evaluate(ctx, selection, out);
    if (it == seen.end()) {
      seen.emplace(std::move(key), ok);
      if (!ok) ++unscorable;
    }
    return ok;
  };

  Partial root;
  if (evaluate_unique(root.selection, root.result)) {
    explored_by_ids.emplace(root.result.augmentation_ids, root.result);
  }
  std::vector<Partial> beam{std::move(root)};

  for (std::size_t depth = 0; depth < ordered.size(); ++depth) {
    const ChoiceGroup& g = *ordered[depth];
    const bool final_depth = depth + 1 == ordered.size();

    std::map<std::vector<std::string>, Partial> extensions;
    for (const Partial& member : beam) {
      for (int choice = -1;
           choice < static_cast<int>(g.options.size()); ++choice) {
        Partial ext;
        ext.selection = member.selection;
        if (choice >= 0) ext.selection.push_back(&g.options[choice]);
        CandidateResult cand;
        if (!evaluate_unique(ext.selection, cand)) continue;
        ext.result = std::move(cand);
        extensions.emplace(ext.result.augmentation_ids, std::move(ext));
      }
    }

    std::vector<Partial> scored;
    scored.reserve(extensions.size());
    for (auto& [ids, p] : extensions) scored.push_back(std::move(p));
    std::sort(scored.begin(), scored.end(),
              [](const Partial& a, const Partial& b) {
                return RankBefore(a.result, b.result);
              });

    if (final_depth) {
      for (const Partial& p : scored) {
        explored_by_ids.emplace(p.result.augmentation_ids, p.result);
      }
    }
    if (scored.size() > static_cast<std::size_t>(width)) {
      scored.resize(width);
    }
    if (!final_depth) {
      for (const Partial& p : scored) {
        explored_by_ids.emplace(p.result.augmentation_ids, p.result);
      }
    }
    beam = std::move(scored);
    if (beam.empty()) break;  // every extension was unscorable
  }

  std::vector<CandidateResult> explored;
  explored.reserve(explored_by_ids.size());
  for (auto& [ids, cand] : explored_by_ids) explored.push_back(std::move(cand));

  return FinishResult(SearchStrategy::Beam, estimate_space(groups),
                      std::move(explored), unscorable, ctx, groups);
}

std::vector<RewardRecord> attribute_rewards(
    const std::vector<CandidateResult>& explored,
    const std::map<std::string, Augmentation>& augs_by_id) {
  std::vector<RewardRecord> out;
  for (const auto& [id, aug] : augs_by_id) {
    RewardRecord rec;
    rec.augmentation_id = id;
    rec.v = aug.validation;
    double sum_with = 0.0;
    double sum_without = 0.0;
    for (const auto& cand : explored) {
      bool has = std::binary_search(cand.augmentation_ids.begin(),
                                    cand.augmentation_ids.end(), id);
      if (has) {
        ++rec.n_with;
        sum_with += cand.score;
      } else {
        ++rec.n_without;
        sum_without += cand.score;
      }
    }
    if (rec.n_with > 0 && rec.n_without > 0) {
      rec.r = sum_with / rec.n_with - sum_without / rec.n_without;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace trialmend
