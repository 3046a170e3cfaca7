#include "trialmend/oracle.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "trialmend/errors.hpp"
#include "trialmend/hash.hpp"

namespace trialmend {

nlohmann::json ScoringSpec::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  doc["base"] = base;
  doc["clamp"] = {clamp_lo, clamp_hi};
  nlohmann::json rules_json = nlohmann::json::array();
  for (const auto& rule : rules) {
    nlohmann::json r = nlohmann::json::object();
    r["pattern"] = rule.pattern;
    r["regex"] = rule.is_regex;
    if (rule.aspect_scope.empty()) {
      r["aspect_scope"] = "ALL";
    } else {
      r["aspect_scope"] = rule.aspect_scope;
    }
    r["weight"] = rule.weight;
    rules_json.push_back(std::move(r));
  }
  doc["rules"] = std::move(rules_json);
  return doc;
}

ScoringSpec ScoringSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw MalformedDocument("scoring spec must be a JSON object");
  }
  ScoringSpec spec;
  if (doc.contains("base")) spec.base = doc.at("base").get<double>();
  if (doc.contains("clamp")) {
    const auto& clamp = doc.at("clamp");
    if (!clamp.is_array() || clamp.size() != 2) {
      throw MalformedDocument("clamp must be [lo, hi]");
    }
    spec.clamp_lo = clamp[0].get<double>();
    spec.clamp_hi = clamp[1].get<double>();
  }
  if (doc.contains("rules")) {
    for (const auto& r : doc.at("rules")) {
      ScoringRule rule;
      if (!r.contains("pattern")) throw MissingField("pattern");
      rule.pattern = r.at("pattern").get<std::string>();
      if (r.contains("regex")) rule.is_regex = r.at("regex").get<bool>();
      if (r.contains("aspect_scope") && !r.at("aspect_scope").is_string()) {
        for (const auto& name : r.at("aspect_scope")) {
          std::string aspect = name.get<std::string>();
          if (!is_modifiable_aspect(aspect)) {
            throw BadEnum("aspect_scope", aspect);
          }
          rule.aspect_scope.push_back(std::move(aspect));
        }
      }
      // aspect_scope: "ALL" (or omitted) leaves the scope vector empty.
      if (r.contains("weight")) rule.weight = r.at("weight").get<double>();
      spec.rules.push_back(std::move(rule));
    }
  }
  return spec;
}

ScoringSpec ScoringSpec::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedDocument("cannot open scoring spec: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedDocument(std::string("invalid scoring spec: ") + e.what());
  }
  return from_json(doc);
}

ReferenceOracle::ReferenceOracle(ScoringSpec spec) : spec_(std::move(spec)) {
  compiled_.reserve(spec_.rules.size());
  for (const auto& rule : spec_.rules) {
    if (rule.is_regex) {
      try {
        compiled_.emplace_back(std::regex(rule.pattern));
      } catch (const std::regex_error& e) {
        throw BadPattern("bad rule pattern '" + rule.pattern + "': " + e.what());
      }
    } else {
      compiled_.emplace_back(std::nullopt);
    }
  }
  // Distinct specs must never share a cache key, so the spec content is part
  // of the identity.
  descriptor_ = "ref:" + short_digest(spec_.to_json().dump());
}

double ReferenceOracle::score(const TrialProtocol& p) {
  double total = spec_.base;
  for (std::size_t i = 0; i < spec_.rules.size(); ++i) {
    const auto& rule = spec_.rules[i];

    const auto in_scope = [&](std::string_view aspect) {
      return rule.aspect_scope.empty() ||
             std::find(rule.aspect_scope.begin(), rule.aspect_scope.end(),
                       aspect) != rule.aspect_scope.end();
    };
    const auto matches = [&](const std::string& text) {
      if (compiled_[i]) return std::regex_search(text, *compiled_[i]);
      return text.find(rule.pattern) != std::string::npos;
    };

    bool fired = false;
    for (const auto& aspect : kModifiableAspects) {
      if (fired || !in_scope(aspect)) continue;
      const std::string name(aspect);
      if (aspect_kind(name) == AspectKind::List) {
        for (const auto& criterion : p.criteria(name)) {
          if (matches(criterion)) {
            fired = true;
            break;
          }
        }
      } else if (matches(p.text_aspect(name))) {
        fired = true;
      }
    }
    if (fired) total += rule.weight;  // each rule contributes at most once
  }
  return std::clamp(total, spec_.clamp_lo, spec_.clamp_hi);
}

std::optional<double> ScoreCache::lookup(const CanonicalHash& h,
                                         const std::string& descriptor) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find({h, descriptor});
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void ScoreCache::store(const CanonicalHash& h, const std::string& descriptor,
                       double score) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_[{h, descriptor}] = score;
}

long ScoreCache::hits() const {
  std::lock_guard<std::mutex> lock(mu_);
  return hits_;
}

long ScoreCache::misses() const {
  std::lock_guard<std::mutex> lock(mu_);
  return misses_;
}

double cached_score_by_hash(const TrialProtocol& p, const CanonicalHash& h,
                            OutcomeOracle& oracle, ScoreCache& cache) {
  if (auto hit = cache.lookup(h, oracle.descriptor())) return *hit;
  double value = oracle.score(p);  // errors propagate, nothing is stored
  cache.store(h, oracle.descriptor(), value);
  return value;
}

double cached_score(const TrialProtocol& p, OutcomeOracle& oracle,
                    ScoreCache& cache) {
  return cached_score_by_hash(p, hash_protocol(p), oracle, cache);
}

}  // namespace trialmend
