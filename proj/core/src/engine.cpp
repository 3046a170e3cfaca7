#include "trialmend/engine.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "trialmend/errors.hpp"

namespace trialmend {

namespace {

double ThresholdFor(const RunConfig& config, FailureMode mode) {
  auto it = config.success_thresholds.find(mode);
  if (it != config.success_thresholds.end()) return it->second;
  static const RunConfig kDefaults;
  return kDefaults.success_thresholds.at(mode);
}

nlohmann::json RewardToJson(const RewardRecord& r) {
  nlohmann::json doc{{"augmentation_id", r.augmentation_id},
                     {"n_with", r.n_with},
                     {"n_without", r.n_without},
                     {"tier", to_token(r.v)}};
  if (r.r) doc["r"] = *r.r;
  return doc;
}

nlohmann::json CandidateToJson(const CandidateResult& c) {
  return nlohmann::json{{"ids", c.augmentation_ids},
                        {"hash", c.protocol_hash},
                        {"score", c.score}};
}

nlohmann::json IterationToJson(const IterationReport& it) {
  nlohmann::json explored = nlohmann::json::array();
  for (const auto& c : it.explored) explored.push_back(CandidateToJson(c));
  nlohmann::json rewards = nlohmann::json::array();
  for (const auto& r : it.rewards) rewards.push_back(RewardToJson(r));
  nlohmann::json doc{
      {"t", it.t},
      {"targets", it.targets},
      {"augmentations", it.augmentations},
      {"validated", it.validated},
      {"strategy",
       it.strategy == SearchStrategy::Exhaustive ? "exhaustive" : "beam"},
      {"space_size", it.space_size},
      {"r_max", it.r_max},
      {"r_best_after", it.r_best_after},
      {"incumbent_replaced", it.incumbent_replaced},
      {"unscorable", it.unscorable},
      {"explored", std::move(explored)},
      {"rewards", std::move(rewards)},
      {"pool_added", it.pool_added_ids},
      {"notes", it.notes},
  };
  if (it.positive_p75) doc["positive_p75"] = *it.positive_p75;
  return doc;
}

/// Runs the loop without the closing transfer; the caller decides when the
/// run's experience reaches global memory (immediately for sequential runs,
/// merged in input order for snapshot-parallel batches).
OptimizationResult OptimizeCore(const TrialProtocol& original,
                                FailureMode mode, OutcomeOracle& oracle,
                                CompletionProvider& provider,
                                const RunConfig& config,
                                const GlobalMemory* read_memory,
                                const AgentConfig& agent_config,
                                LocalMemory* out_local) {
  OptimizationResult res;
  res.original = original;
  res.mode = mode;

  MeteredProvider meter(provider);
  AgentConfig acfg = agent_config;
  acfg.memory_params = config.memory_params;
  AgentPipeline pipeline(meter, acfg);
  pipeline.set_log(&res.prompt_log);

  ScoreCache cache;
  res.p0 = cached_score(original, oracle, cache);

  const ModeMemory* gmode =
      (config.use_memory && read_memory != nullptr)
          ? read_memory->mode_if_present(mode)
          : nullptr;

  TrialProtocol incumbent = original;
  double incumbent_score = res.p0;
  double r_best = 0.0;
  LocalMemory local;
  res.termination = Termination::BudgetExhausted;

  for (int t = 1; t <= config.n_max; ++t) {
    IterationReport rep;
    rep.t = t;
    pipeline.set_notes(&rep.notes);

    LoadedMemory loaded;
    std::map<SlotId, SlotOutcome> outcomes;
    if (config.use_memory) {
      loaded = load_memory(read_memory, local, mode, t);
      outcomes = local.slot_outcomes();
    }

    std::vector<ModificationTarget> targets;
    try {
      targets = pipeline.run_analysis(incumbent, mode, loaded, outcomes,
                                      gmode, t);
    } catch (const PlaybookMiss&) {
      throw;
    } catch (const ProviderFailure& e) {
      rep.notes.push_back(std::string("analysis unavailable: ") + e.what());
    }
    rep.targets = static_cast<int>(targets.size());

    if (targets.empty()) {
      // Nothing to change: a first-iteration conclusion means the analysis
      // found no deficiency; later it means the space is used up.
      res.termination = (t == 1) ? Termination::EmptyAnalysis
                                 : Termination::SpaceExhausted;
      rep.r_max = r_best;
      rep.r_best_after = r_best;
      res.iterations.push_back(std::move(rep));
      res.r_best_trajectory.push_back(r_best);
      break;
    }

    GenerationCountFn count_for = [&](const ModificationTarget& tgt) {
      if (!config.use_memory || gmode == nullptr) {
        return config.memory_params.gen_base;
      }
      const std::string key =
          tgt.category ? to_token(*tgt.category) : tgt.target.aspect_name;
      auto it = gmode->signatures.find(key);
      return adaptive_generation_count(
          it == gmode->signatures.end() ? nullptr : &it->second,
          config.memory_params);
    };

    std::vector<Augmentation> augs;
    try {
      augs = pipeline.run_augment(targets, incumbent, mode, loaded.tactical,
                                  count_for, t);
    } catch (const PlaybookMiss&) {
      throw;
    } catch (const ProviderFailure& e) {
      rep.notes.push_back(std::string("generation unavailable: ") + e.what());
    }
    rep.augmentations = static_cast<int>(augs.size());

    augs = pipeline.run_validate(std::move(augs), incumbent, t);

    std::vector<Augmentation> passing;
    std::vector<Augmentation> banned_now;
    for (Augmentation& aug : augs) {
      switch (aug.validation) {
        case ValidationTier::Excellent:
        case ValidationTier::Good:
        case ValidationTier::Moderate:
          passing.push_back(aug);
          break;
        case ValidationTier::Banned:
          banned_now.push_back(aug);
          break;
        case ValidationTier::Bad:
        case ValidationTier::Pending:
          break;  // excluded from the candidate space
      }
    }
    rep.validated = static_cast<int>(passing.size());

    const std::vector<PoolEntry>* pool = nullptr;
    if (config.use_pool && config.use_memory && read_memory != nullptr) {
      if (const ModeMemory* m = read_memory->mode_if_present(mode)) {
        if (!m->pool.empty()) pool = &m->pool;
      }
    }

    BuildGroupsResult built = build_groups(passing, pool, incumbent);
    for (std::string& n : built.notes) rep.notes.push_back(std::move(n));

    if (built.groups.empty()) {
      // No passing candidates and nothing usable from the pool: the space
      // holds only the unchanged incumbent.
      for (const Augmentation& aug : banned_now) local.record_banned(aug);
      res.termination = Termination::SpaceExhausted;
      rep.r_max = r_best;
      rep.r_best_after = r_best;
      res.iterations.push_back(std::move(rep));
      res.r_best_trajectory.push_back(r_best);
      break;
    }

    rep.space_size = estimate_space(built.groups);
    SearchContext ctx;
    ctx.base = &incumbent;
    ctx.original_score = res.p0;
    ctx.oracle = &oracle;
    ctx.cache = &cache;

    ExplorationResult ex =
        rep.space_size < config.space_threshold
            ? exhaustive_search(ctx, built.groups)
            : beam_search(ctx, built.groups, config.beam_width);
    rep.strategy = ex.strategy;
    rep.unscorable = ex.unscorable;

    std::map<std::string, Augmentation> universe;
    for (const ChoiceGroup& g : built.groups) {
      for (const Augmentation& opt : g.options) universe.emplace(opt.id, opt);
    }

    if (ex.best) {
      rep.r_max = ex.r_max;
      if (ex.r_max > r_best) {
        ModificationSet mods;
        for (const std::string& id : ex.best->augmentation_ids) {
          mods.add(universe.at(id));
        }
        incumbent = apply(incumbent, mods);
        incumbent_score = ex.best->score;
        r_best = ex.r_max;
        rep.incumbent_replaced = true;
      }
    } else {
      rep.r_max = r_best;  // every candidate was unscorable
    }
    rep.r_best_after = r_best;

    DistillResult distilled = distill(ex.rewards, universe, banned_now, t);
    for (const PoolEntry& e : distilled.pool_additions) {
      rep.pool_added_ids.push_back(e.aug.id);
    }
    rep.positive_p75 = distilled.positive_p75;
    rep.explored = std::move(ex.explored);
    rep.rewards = std::move(ex.rewards);

    if (config.use_memory) {
      for (const Augmentation& aug : banned_now) local.record_banned(aug);
      IterationExperience exp;
      exp.t = t;
      exp.rewards = rep.rewards;
      exp.augs = std::move(universe);
      exp.distilled = std::move(distilled);
      local.record_iteration(std::move(exp));
    }

    res.iterations.push_back(std::move(rep));
    res.r_best_trajectory.push_back(r_best);
  }
  pipeline.set_notes(nullptr);

  res.best = incumbent;
  res.p_star = incumbent_score;
  res.delta_p = incumbent_score - res.p0;
  res.threshold = ThresholdFor(config, mode);
  res.threshold_achieved = res.p_star >= res.threshold;

  res.cost.tokens_in = meter.tokens_in();
  res.cost.tokens_out = meter.tokens_out();
  res.cost.provider_calls = meter.calls();
  res.cost.oracle_calls = cache.misses();
  res.cost.estimated_currency =
      static_cast<double>(meter.tokens_in()) * config.cost_rates.per_token_in +
      static_cast<double>(meter.tokens_out()) * config.cost_rates.per_token_out;

  if (out_local != nullptr) *out_local = std::move(local);
  return res;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json thresholds = nlohmann::json::object();
  for (const auto& [mode, value] : success_thresholds) {
    thresholds[to_token(mode)] = value;
  }
  return nlohmann::json{
      {"n_max", n_max},
      {"beam_width", beam_width},
      {"space_threshold", space_threshold},
      {"min_improvement", min_improvement},
      {"diversification_penalty", memory_params.diversification_penalty},
      {"exploration_bonus", memory_params.exploration_bonus},
      {"gen_base", memory_params.gen_base},
      {"gen_var_ref", memory_params.gen_var_ref},
      {"gen_max", memory_params.gen_max},
      {"success_thresholds", std::move(thresholds)},
      {"use_memory", use_memory},
      {"use_pool", use_pool},
      {"cost_per_token_in", cost_rates.per_token_in},
      {"cost_per_token_out", cost_rates.per_token_out},
      {"seed", seed},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw MalformedDocument("run config must be an object");
  RunConfig c;
  c.n_max = doc.value("n_max", c.n_max);
  c.beam_width = doc.value("beam_width", c.beam_width);
  c.space_threshold = doc.value("space_threshold", c.space_threshold);
  c.min_improvement = doc.value("min_improvement", c.min_improvement);
  c.memory_params.diversification_penalty =
      doc.value("diversification_penalty",
                c.memory_params.diversification_penalty);
  c.memory_params.exploration_bonus =
      doc.value("exploration_bonus", c.memory_params.exploration_bonus);
  c.memory_params.gen_base = doc.value("gen_base", c.memory_params.gen_base);
  c.memory_params.gen_var_ref =
      doc.value("gen_var_ref", c.memory_params.gen_var_ref);
  c.memory_params.gen_max = doc.value("gen_max", c.memory_params.gen_max);
  if (doc.contains("success_thresholds")) {
    const nlohmann::json& t = doc["success_thresholds"];
    if (!t.is_object()) throw MalformedDocument("success_thresholds must be an object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      c.success_thresholds[failure_mode_from_token(it.key())] =
          it.value().get<double>();
    }
  }
  c.use_memory = doc.value("use_memory", c.use_memory);
  c.use_pool = doc.value("use_pool", c.use_pool);
  c.cost_rates.per_token_in =
      doc.value("cost_per_token_in", c.cost_rates.per_token_in);
  c.cost_rates.per_token_out =
      doc.value("cost_per_token_out", c.cost_rates.per_token_out);
  c.seed = doc.value("seed", c.seed);
  if (c.n_max < 1) throw MalformedDocument("n_max must be at least 1");
  if (c.beam_width < 1) throw MalformedDocument("beam_width must be at least 1");
  return c;
}

std::string to_token(Termination t) {
  switch (t) {
    case Termination::BudgetExhausted: return "budget_exhausted";
    case Termination::SpaceExhausted: return "space_exhausted";
    case Termination::EmptyAnalysis: return "empty_analysis";
  }
  throw BadEnum("termination", "?");
}

nlohmann::json OptimizationResult::to_json(const RunConfig& config) const {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : iterations) its.push_back(IterationToJson(it));
  return nlohmann::json{
      {"config", config.to_json()},
      {"trial",
       {{"nct_id", original.nct_id}, {"failure_mode", to_token(mode)}}},
      {"p0", p0},
      {"p_star", p_star},
      {"delta_p", delta_p},
      {"threshold", threshold},
      {"threshold_achieved", threshold_achieved},
      {"termination", to_token(termination)},
      {"r_best_trajectory", r_best_trajectory},
      {"iterations", std::move(its)},
      {"cost",
       {{"tokens_in", cost.tokens_in},
        {"tokens_out", cost.tokens_out},
        {"provider_calls", cost.provider_calls},
        {"oracle_calls", cost.oracle_calls},
        {"estimated_currency", cost.estimated_currency}}},
      {"best_protocol", protocol_to_json(best)},
      {"original_protocol", protocol_to_json(original)},
  };
}

OptimizationResult optimize(const TrialProtocol& original, FailureMode mode,
                            OutcomeOracle& oracle,
                            CompletionProvider& provider,
                            const RunConfig& config, GlobalMemory* global,
                            const AgentConfig& agent_config) {
  LocalMemory local;
  OptimizationResult res = OptimizeCore(original, mode, oracle, provider,
                                        config, global, agent_config, &local);
  if (config.use_memory && global != nullptr) {
    transfer(*global, mode, local, nullptr, nullptr, nullptr);
  }
  return res;
}

std::vector<BatchOutcome> run_batch(const std::vector<BatchTrial>& trials,
                                    OutcomeOracle& oracle,
                                    CompletionProvider& provider,
                                    const RunConfig& config,
                                    GlobalMemory* global,
                                    const AgentConfig& agent_config,
                                    int parallelism) {
  std::vector<BatchOutcome> out;
  out.reserve(trials.size());

  if (parallelism <= 1) {
    // Sequential: each run sees every earlier run's transferred experience.
    for (const BatchTrial& trial : trials) {
      BatchOutcome o;
      o.id = trial.id;
      o.mode = trial.mode;
      o.result = optimize(trial.protocol, trial.mode, oracle, provider,
                          config, global, agent_config);
      out.push_back(std::move(o));
    }
    return out;
  }

  // Snapshot-parallel: every run reads the batch-start memory, transfers
  // merge in input order afterward. Results are independent of scheduling.
  const GlobalMemory snapshot =
      global != nullptr ? *global : GlobalMemory{};
  std::vector<OptimizationResult> results(trials.size());
  std::vector<LocalMemory> locals(trials.size());
  std::vector<std::exception_ptr> errors(trials.size());

  std::size_t next = 0;
  while (next < trials.size()) {
    std::size_t batch_end =
        std::min(next + static_cast<std::size_t>(parallelism), trials.size());
    std::vector<std::thread> workers;
    for (std::size_t i = next; i < batch_end; ++i) {
      workers.emplace_back([&, i]() {
        try {
          results[i] = OptimizeCore(trials[i].protocol, trials[i].mode,
                                    oracle, provider, config, &snapshot,
                                    agent_config, &locals[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (std::thread& w : workers) w.join();
    next = batch_end;
  }
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }

  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (config.use_memory && global != nullptr) {
      transfer(*global, trials[i].mode, locals[i], nullptr, nullptr, nullptr);
    }
    BatchOutcome o;
    o.id = trials[i].id;
    o.mode = trials[i].mode;
    o.result = std::move(results[i]);
    out.push_back(std::move(o));
  }
  return out;
}

nlohmann::json corpus_report(const std::vector<BatchOutcome>& outcomes,
                             const RunConfig& config) {
  const std::size_t n = outcomes.size();
  std::vector<double> deltas;
  deltas.reserve(n);
  std::size_t positive = 0;
  std::size_t meaningful = 0;
  std::size_t threshold_hits = 0;
  double delta_sum = 0.0;
  CostReport cost;

  std::vector<double> gain_sum(static_cast<std::size_t>(config.n_max), 0.0);
  nlohmann::json rows = nlohmann::json::array();

  for (const BatchOutcome& o : outcomes) {
    const OptimizationResult& r = o.result;
    deltas.push_back(r.delta_p);
    delta_sum += r.delta_p;
    if (r.delta_p > 0.0) ++positive;
    if (r.delta_p > config.min_improvement) ++meaningful;
    if (r.threshold_achieved) ++threshold_hits;
    cost.tokens_in += r.cost.tokens_in;
    cost.tokens_out += r.cost.tokens_out;
    cost.provider_calls += r.cost.provider_calls;
    cost.oracle_calls += r.cost.oracle_calls;
    cost.estimated_currency += r.cost.estimated_currency;

    // Per-iteration gain: trajectory step, held at zero past termination.
    double prev = 0.0;
    for (std::size_t k = 0; k < gain_sum.size(); ++k) {
      if (k < r.r_best_trajectory.size()) {
        gain_sum[k] += r.r_best_trajectory[k] - prev;
        prev = r.r_best_trajectory[k];
      }
    }

    rows.push_back({{"id", o.id},
                    {"nct_id", r.original.nct_id},
                    {"failure_mode", to_token(o.mode)},
                    {"p0", r.p0},
                    {"p_star", r.p_star},
                    {"delta_p", r.delta_p},
                    {"termination", to_token(r.termination)},
                    {"threshold_achieved", r.threshold_achieved},
                    {"iterations", r.iterations.size()}});
  }

  nlohmann::json gains = nlohmann::json::array();
  for (double g : gain_sum) {
    gains.push_back(n > 0 ? g / static_cast<double>(n) : 0.0);
  }

  auto rate = [n](std::size_t k) {
    return n > 0 ? static_cast<double>(k) / static_cast<double>(n) : 0.0;
  };
  std::optional<double> p25 = percentile_nearest_rank(deltas, 0.25);
  std::optional<double> p75 = percentile_nearest_rank(deltas, 0.75);

  nlohmann::json doc{
      {"n_trials", n},
      {"positive_rate", rate(positive)},
      {"meaningful_rate", rate(meaningful)},
      {"meaningful_min_improvement", config.min_improvement},
      {"mean_delta_p", n > 0 ? delta_sum / static_cast<double>(n) : 0.0},
      {"threshold_rate", rate(threshold_hits)},
      {"per_iteration_mean_gain", std::move(gains)},
      {"cost",
       {{"tokens_in", cost.tokens_in},
        {"tokens_out", cost.tokens_out},
        {"provider_calls", cost.provider_calls},
        {"oracle_calls", cost.oracle_calls},
        {"estimated_currency", cost.estimated_currency}}},
      {"trials", std::move(rows)},
  };
  if (p25) doc["delta_p_p25"] = *p25;
  if (p75) doc["delta_p_p75"] = *p75;
  return doc;
}

}  // namespace trialmend
