#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "trialmend/protocol.hpp"

namespace trialmend {

/// A success-probability estimator for trial protocols. Implementations must
/// be deterministic for equal canonical protocol bytes, and distinguishable
/// through `descriptor()` (two backends that can disagree must not share a
/// descriptor, since caches key on it).
class OutcomeOracle {
 public:
  virtual ~OutcomeOracle() = default;

  /// Predicted success probability in [0, 1]. Throws TransportError or
  /// BadResponse when the backend fails; such candidates are unscorable and
  /// get skipped, never crash the run.
  virtual double score(const TrialProtocol& p) = 0;

  virtual std::string descriptor() const = 0;
};

/// One additive scoring rule: when `pattern` occurs in any in-scope aspect
/// text, `weight` is added (once per rule, however many aspects match).
struct ScoringRule {
  std::string pattern;
  bool is_regex = false;
  std::vector<std::string> aspect_scope;  // empty = all modifiable aspects
  double weight = 0.0;
};

/// Declarative spec for the deterministic reference backend:
/// score = clamp(base + sum of matching rule weights).
struct ScoringSpec {
  double base = 0.5;
  std::vector<ScoringRule> rules;
  double clamp_lo = 0.01;
  double clamp_hi = 0.99;

  nlohmann::json to_json() const;
  static ScoringSpec from_json(const nlohmann::json& doc);  // throws BadPattern et al.
  static ScoringSpec load_file(const std::string& path);
};

/// In-process oracle evaluating a ScoringSpec. Never fails.
class ReferenceOracle : public OutcomeOracle {
 public:
  explicit ReferenceOracle(ScoringSpec spec);

  double score(const TrialProtocol& p) override;
  std::string descriptor() const override { return descriptor_; }

 private:
  ScoringSpec spec_;
  std::vector<std::optional<std::regex>> compiled_;
  std::string descriptor_;
};

/// Thread-safe memo of oracle scores keyed by (canonical hash, backend
/// descriptor). A hit returns exactly what a fresh call against the same
/// descriptor would; errors are never cached.
class ScoreCache {
 public:
  std::optional<double> lookup(const CanonicalHash& h,
                               const std::string& descriptor);
  void store(const CanonicalHash& h, const std::string& descriptor,
             double score);

  long hits() const;
  long misses() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, double> entries_;
  long hits_ = 0;
  long misses_ = 0;
};

/// Scores through the cache: hit → cached value, miss → backend call whose
/// result is stored. Backend errors propagate without polluting the cache.
double cached_score(const TrialProtocol& p, OutcomeOracle& oracle,
                    ScoreCache& cache);
double cached_score_by_hash(const TrialProtocol& p, const CanonicalHash& h,
                            OutcomeOracle& oracle, ScoreCache& cache);

}  // namespace trialmend
