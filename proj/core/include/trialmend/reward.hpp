#pragma once

#include <optional>
#include <string>

#include "trialmend/modification.hpp"

namespace trialmend {

/// Marginal credit assigned to one augmentation after a search pass:
/// mean score of explored candidates containing it minus mean score of those
/// without it. When either side is empty the attribution is undefined and
/// `r` stays empty (the modification counts as still unexplored, not failed).
struct RewardRecord {
  std::string augmentation_id;
  std::optional<double> r;
  int n_with = 0;
  int n_without = 0;
  ValidationTier v = ValidationTier::Pending;

  bool attributable() const { return r.has_value(); }
};

}  // namespace trialmend
