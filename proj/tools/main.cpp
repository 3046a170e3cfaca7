// trialmend: operator entry points for the protocol-redesign engine.
// Subcommands: optimize (one trial), batch (a corpus directory), report
// (render and re-verify a batch document), memory inspect (pretty-print a
// store), gen-synthetic (seeded corpus + recorded playbook for replays).
//
// Exit codes: 0 success (an EmptyAnalysis run is a success), 1 fatal
// runtime error (unreadable file, unreachable oracle), 2 usage error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trialmend/engine.hpp"
#include "trialmend/errors.hpp"
#include "trialmend/memory.hpp"
#include "trialmend/oracle.hpp"
#include "trialmend/protocol.hpp"
#include "trialmend/provider.hpp"
#include "trialmend/remote_oracle.hpp"
#include "trialmend/synthetic.hpp"

using namespace trialmend;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitUsage = 2;

/// Thrown for a bad flag value detected after CLI11 parsing; exits 2.
struct UsageError {
  std::string message;  // names the offending flag
};

std::unique_ptr<OutcomeOracle> make_oracle(const std::string& spec) {
  if (spec.rfind("ref:", 0) == 0) {
    return std::make_unique<ReferenceOracle>(
        ScoringSpec::load_file(spec.substr(4)));
  }
  if (spec.rfind("remote:", 0) == 0) {
    return std::make_unique<RemoteOracle>(RemoteOracleConfig{spec.substr(7)});
  }
  throw UsageError{"--oracle expects ref:SPEC_FILE or remote:URL, got '" +
                   spec + "'"};
}

std::unique_ptr<CompletionProvider> make_provider(const std::string& spec) {
  if (spec == "synthetic") return std::make_unique<SyntheticAnalystProvider>();
  if (spec.rfind("scripted:", 0) == 0) {
    return std::make_unique<ScriptedProvider>(
        Playbook::load_file(spec.substr(9)));
  }
  if (spec.rfind("http:", 0) == 0) {
    HttpProviderConfig cfg;
    cfg.base_url = spec;  // the full URL, scheme included
    if (const char* key = std::getenv("TRIALMEND_PROVIDER_KEY")) {
      cfg.api_key = key;
    }
    return std::make_unique<HttpProvider>(cfg);
  }
  throw UsageError{
      "--provider expects synthetic, scripted:PLAYBOOK_FILE, or http:URL, "
      "got '" +
      spec + "'"};
}

FailureMode resolve_mode(const std::string& token,
                         const TrialProtocol& protocol) {
  if (token.empty()) return protocol.failure_reason;
  try {
    return failure_mode_from_token(token);
  } catch (const BadEnum&) {
    throw UsageError{"--failure-mode: unknown mode '" + token +
                     "' (expected enrollment, safety, or efficacy)"};
  }
}

void write_document(const nlohmann::json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write output file: " + out_path);
  out << doc.dump(2) << '\n';
  if (!out.flush()) throw Error("failed writing output file: " + out_path);
}

nlohmann::json read_json_file(const std::string& path,
                              const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + what + ": " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedDocument(what + " " + path + ": " + e.what());
  }
  return doc;
}

// Shared flag bundle for the two run commands.
struct RunFlags {
  std::string config_path;
  std::string memory_path;
  bool no_memory = false;
  bool no_pool = false;
  std::optional<std::uint64_t> seed;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config_path,
                  "Run configuration JSON (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--memory", flags.memory_path,
                  "Memory store file: loaded if present, saved back after "
                  "the run");
  cmd->add_flag("--no-memory", flags.no_memory,
                "Ablation: run without strategic guidance, exemplars, or "
                "signature statistics");
  cmd->add_flag("--no-pool", flags.no_pool,
                "Ablation: pooled augmentations never join the candidate "
                "space");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&flags](const std::uint64_t& v) { flags.seed = v; },
      "Seed echoed into result documents");
}

RunConfig resolve_config(const RunFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = RunConfig::from_json(read_json_file(flags.config_path,
                                              "run configuration"));
  }
  if (flags.no_memory) cfg.use_memory = false;
  if (flags.no_pool) cfg.use_pool = false;
  if (flags.seed) cfg.seed = *flags.seed;
  return cfg;
}

/// Loads the store behind --memory (empty when the file does not exist yet).
std::optional<GlobalMemory> load_memory(const RunFlags& flags) {
  if (flags.memory_path.empty()) return std::nullopt;
  if (std::filesystem::exists(flags.memory_path)) {
    return GlobalMemory::load_file(flags.memory_path);
  }
  return GlobalMemory{};
}

// ---------------------------------------------------------------------------
// optimize

struct OptimizeArgs {
  std::string trial_path;
  std::string mode_token;
  std::string oracle_spec;
  std::string provider_spec = "synthetic";
  std::string out_path;
  RunFlags run;
};

int cmd_optimize(const OptimizeArgs& args) {
  TrialProtocol protocol = load_protocol_file(args.trial_path);
  FailureMode mode = resolve_mode(args.mode_token, protocol);
  RunConfig cfg = resolve_config(args.run);
  std::unique_ptr<OutcomeOracle> oracle = make_oracle(args.oracle_spec);
  std::unique_ptr<CompletionProvider> provider =
      make_provider(args.provider_spec);
  std::optional<GlobalMemory> memory = load_memory(args.run);

  OptimizationResult result =
      optimize(protocol, mode, *oracle, *provider, cfg,
               memory ? &*memory : nullptr, AgentConfig{});

  if (memory) memory->save_file(args.run.memory_path);
  write_document(result.to_json(cfg), args.out_path);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// batch

struct BatchArgs {
  std::string corpus_dir;
  std::string oracle_spec;  // empty: the corpus's own scoring spec
  std::string provider_spec = "synthetic";
  std::string out_path;
  int parallelism = 1;
  RunFlags run;
};

int cmd_batch(const BatchArgs& args) {
  SyntheticCorpus corpus = SyntheticCorpus::load_dir(args.corpus_dir);
  std::vector<BatchTrial> trials;
  for (const SyntheticTrial& t : corpus.trials) {
    trials.push_back({t.id, t.protocol, t.mode});
  }
  RunConfig cfg = resolve_config(args.run);
  std::unique_ptr<OutcomeOracle> oracle =
      args.oracle_spec.empty()
          ? std::make_unique<ReferenceOracle>(corpus.scoring)
          : make_oracle(args.oracle_spec);
  std::unique_ptr<CompletionProvider> provider =
      make_provider(args.provider_spec);
  std::optional<GlobalMemory> memory = load_memory(args.run);

  std::vector<BatchOutcome> outcomes =
      run_batch(trials, *oracle, *provider, cfg,
                memory ? &*memory : nullptr, AgentConfig{}, args.parallelism);

  if (memory) memory->save_file(args.run.memory_path);

  nlohmann::json rows = nlohmann::json::array();
  for (const BatchOutcome& o : outcomes) {
    rows.push_back({{"id", o.id},
                    {"failure_mode", to_token(o.mode)},
                    {"result", o.result.to_json(cfg)}});
  }
  nlohmann::json doc{{"config", cfg.to_json()},
                     {"outcomes", std::move(rows)},
                     {"report", corpus_report(outcomes, cfg)}};
  write_document(doc, args.out_path);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string in_path;
  std::string curve_out;
};

std::string fixed(double v, int width) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << v;
  std::string s = out.str();
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), ' ');
  return s;
}

int cmd_report(const ReportArgs& args) {
  nlohmann::json doc = read_json_file(args.in_path, "batch document");
  if (!doc.contains("outcomes") || !doc.contains("report")) {
    throw MalformedDocument("batch document " + args.in_path +
                            ": expected 'outcomes' and 'report' keys");
  }
  const nlohmann::json& report = doc["report"];

  std::cout << "trial            mode        p0     p_star  delta_p  "
               "iters  termination\n";
  for (const nlohmann::json& row : report.at("trials")) {
    std::ostringstream line;
    std::string id = row.at("id").get<std::string>();
    std::string fm = row.at("failure_mode").get<std::string>();
    line << id << std::string(id.size() < 16 ? 16 - id.size() : 1, ' ')
         << fm << std::string(fm.size() < 11 ? 11 - fm.size() : 1, ' ')
         << fixed(row.at("p0").get<double>(), 7)
         << fixed(row.at("p_star").get<double>(), 9)
         << fixed(row.at("delta_p").get<double>(), 9) << "  "
         << fixed(static_cast<double>(row.at("iterations").get<int>()), 5)
         << "  " << row.at("termination").get<std::string>();
    std::cout << line.str() << '\n';
  }
  std::cout << "\nn_trials        " << report.at("n_trials").get<int>()
            << "\nmean_delta_p    " << report.at("mean_delta_p").get<double>()
            << "\npositive_rate   " << report.at("positive_rate").get<double>()
            << "\nmeaningful_rate "
            << report.at("meaningful_rate").get<double>()
            << "\nthreshold_rate  "
            << report.at("threshold_rate").get<double>()
            << "\nest_currency    "
            << report.at("cost").at("estimated_currency").get<double>()
            << "\n";

  std::cout << "\niteration  mean_gain\n";
  const nlohmann::json& gains = report.at("per_iteration_mean_gain");
  for (std::size_t k = 0; k < gains.size(); ++k) {
    std::cout << "        " << (k + 1) << "  " << gains[k].get<double>()
              << '\n';
  }
  if (!args.curve_out.empty()) {
    std::ofstream out(args.curve_out, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write curve file: " + args.curve_out);
    out << "iteration,mean_gain\n";
    for (std::size_t k = 0; k < gains.size(); ++k) {
      out << (k + 1) << ',' << nlohmann::json(gains[k].get<double>()).dump()
          << '\n';
    }
  }

  // Re-derive the aggregates from the per-trial results and insist the
  // report agrees; a mismatch means the document was edited or truncated.
  const nlohmann::json& outcomes = doc["outcomes"];
  double delta_sum = 0.0;
  double currency = 0.0;
  std::size_t positive = 0;
  std::size_t threshold_hits = 0;
  for (const nlohmann::json& o : outcomes) {
    const nlohmann::json& r = o.at("result");
    double dp = r.at("delta_p").get<double>();
    delta_sum += dp;
    if (dp > 0.0) ++positive;
    if (r.at("threshold_achieved").get<bool>()) ++threshold_hits;
    currency += r.at("cost").at("estimated_currency").get<double>();
  }
  const auto n = static_cast<double>(outcomes.size());
  std::vector<std::pair<std::string, bool>> checks{
      {"n_trials", report.at("n_trials").get<std::size_t>() ==
                       outcomes.size()},
      {"mean_delta_p", report.at("mean_delta_p").get<double>() ==
                           (outcomes.empty() ? 0.0 : delta_sum / n)},
      {"positive_rate",
       report.at("positive_rate").get<double>() ==
           (outcomes.empty() ? 0.0 : static_cast<double>(positive) / n)},
      {"threshold_rate",
       report.at("threshold_rate").get<double>() ==
           (outcomes.empty() ? 0.0
                             : static_cast<double>(threshold_hits) / n)},
      {"cost.estimated_currency",
       report.at("cost").at("estimated_currency").get<double>() == currency},
  };
  bool clean = true;
  for (const auto& [field, ok] : checks) {
    if (!ok) {
      std::cerr << "error: report field '" << field
                << "' does not match recomputation from per-trial results\n";
      clean = false;
    }
  }
  return clean ? kExitOk : kExitFatal;
}

// ---------------------------------------------------------------------------
// memory inspect

int cmd_memory_inspect(const std::string& path) {
  std::cout << "schema version " << GlobalMemory::kSchemaVersion << '\n';
  if (!std::filesystem::exists(path)) {
    std::cout << "memory store: empty (no file at " << path << ")\n";
    return kExitOk;
  }
  GlobalMemory store = GlobalMemory::load_file(path);
  nlohmann::json doc = store.to_json();
  const nlohmann::json& modes = doc.at("modes");
  if (modes.empty()) {
    std::cout << "memory store: empty\n";
    return kExitOk;
  }
  bool any = false;
  for (const auto& [token, unused] : modes.items()) {
    (void)unused;
    const ModeMemory& m = store.mode(failure_mode_from_token(token));
    if (m.runs == 0 && m.strategic.empty() && m.signatures.empty() &&
        m.pool.empty()) {
      continue;
    }
    any = true;
    std::cout << "\n[" << token << "] runs=" << m.runs << '\n';
    if (!m.strategic.empty()) {
      std::cout << "  strategic:\n";
      for (const GuidanceEntry& g : m.strategic) {
        std::cout << "    " << g.key << " / " << g.action << " (support "
                  << g.support << ", mean reward " << g.mean_reward
                  << "): " << g.recommendation << '\n';
      }
    }
    if (!m.signatures.empty()) {
      std::cout << "  signatures:\n";
      for (const auto& [key, sig] : m.signatures) {
        std::cout << "    " << key << ": n=" << sig.n << " mean=" << sig.mean
                  << " variance=" << sig.variance()
                  << " success_rate=" << sig.success_rate();
        for (const auto& [action, stats] : sig.actions) {
          std::cout << " " << action << "=" << stats.n_pos << "/" << stats.n;
        }
        std::cout << '\n';
      }
    }
    if (!m.pool.empty()) {
      std::cout << "  pool:\n";
      for (const PoolEntry& e : m.pool) {
        std::cout << "    " << e.aug.target.aspect_name;
        if (e.aug.target.index) std::cout << '[' << *e.aug.target.index << ']';
        std::cout << " " << to_token(e.aug.action) << " (reward " << e.reward
                  << ", iteration " << e.minted_iteration << ")";
        if (e.aug.value) std::cout << ": " << *e.aug.value;
        std::cout << '\n';
      }
    }
  }
  if (!any) std::cout << "memory store: empty\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-synthetic

struct GenArgs {
  std::string out_dir;
  int n = 20;
  std::uint64_t seed = 7;
  double base = 0.45;
  bool ablation = false;
};

int cmd_gen_synthetic(const GenArgs& args) {
  namespace fs = std::filesystem;
  SyntheticCorpus corpus;
  std::optional<GlobalMemory> warm;
  if (args.ablation) {
    AblationCorpus ab = make_ablation_corpus(args.n, args.seed);
    corpus = std::move(ab.corpus);
    warm = std::move(ab.warm_memory);
  } else {
    corpus = make_corpus({args.n, args.seed, args.base});
  }
  corpus.write_dir(args.out_dir);
  if (warm) {
    warm->save_file((fs::path(args.out_dir) / "warm_memory.json").string());
  }

  // Record the deterministic analyst over the whole corpus so scripted
  // replays (--provider scripted:playbook.json) cover every prompt. Warm
  // corpora are recorded with their guidance loaded, matching a full run.
  std::vector<BatchTrial> trials;
  for (const SyntheticTrial& t : corpus.trials) {
    trials.push_back({t.id, t.protocol, t.mode});
  }
  SyntheticAnalystProvider analyst;
  RecordingProvider recorder(analyst);
  ReferenceOracle oracle(corpus.scoring);
  RunConfig cfg;
  GlobalMemory warm_copy;
  if (warm) warm_copy = *warm;
  run_batch(trials, oracle, recorder, cfg, warm ? &warm_copy : nullptr,
            AgentConfig{}, 1);
  recorder.recorded().save_file(
      (fs::path(args.out_dir) / "playbook.json").string());

  std::cout << "wrote " << corpus.trials.size() << " trials to "
            << args.out_dir << (warm ? " (with warm memory)" : "") << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failed-trial protocol redesign: closed-loop optimizer, "
               "corpus runner, and artifact tools"};
  app.require_subcommand(1);

  OptimizeArgs opt_args;
  CLI::App* opt = app.add_subcommand(
      "optimize", "Run the redesign loop on one trial protocol");
  opt->add_option("--trial", opt_args.trial_path,
                  "Trial protocol JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  opt->add_option("--failure-mode", opt_args.mode_token,
                  "enrollment|safety|efficacy (default: the protocol's "
                  "recorded failure reason)");
  opt->add_option("--oracle", opt_args.oracle_spec,
                  "ref:SPEC_FILE or remote:URL")
      ->required();
  opt->add_option("--provider", opt_args.provider_spec,
                  "synthetic, scripted:PLAYBOOK_FILE, or http:URL");
  opt->add_option("--out", opt_args.out_path,
                  "Result document path (default: stdout)");
  add_run_flags(opt, opt_args.run);

  BatchArgs batch_args;
  CLI::App* batch = app.add_subcommand(
      "batch", "Run every trial in a corpus directory with shared memory");
  batch->add_option("--corpus", batch_args.corpus_dir,
                    "Corpus directory (manifest.json, scoring.json, trials/)")
      ->required()
      ->check(CLI::ExistingDirectory);
  batch->add_option("--oracle", batch_args.oracle_spec,
                    "ref:SPEC_FILE or remote:URL (default: the corpus's own "
                    "scoring spec)");
  batch->add_option("--provider", batch_args.provider_spec,
                    "synthetic, scripted:PLAYBOOK_FILE, or http:URL");
  batch->add_option("--parallelism", batch_args.parallelism,
                    "Worker threads; results are identical at any value")
      ->check(CLI::PositiveNumber);
  batch->add_option("--out", batch_args.out_path,
                    "Batch document path (default: stdout)");
  add_run_flags(batch, batch_args.run);

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand(
      "report", "Render a batch document as text and re-verify its "
                "aggregates");
  report->add_option("--in", report_args.in_path, "Batch document path")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--curve-out", report_args.curve_out,
                     "Write the per-iteration mean-gain curve as CSV");

  CLI::App* memory = app.add_subcommand("memory", "Memory store utilities");
  memory->require_subcommand(1);
  std::string memory_file;
  CLI::App* inspect =
      memory->add_subcommand("inspect", "Pretty-print a memory store");
  inspect->add_option("--file", memory_file, "Memory store path")->required();

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand(
      "gen-synthetic",
      "Generate a seeded synthetic corpus with a recorded playbook");
  gen->add_option("--out", gen_args.out_dir, "Output directory")->required();
  gen->add_option("--n", gen_args.n, "Number of trials")
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_args.seed, "Corpus seed");
  gen->add_option("--base", gen_args.base,
                  "Baseline score of the corpus scoring spec");
  gen->add_flag("--ablation", gen_args.ablation,
                "Emit the paired ablation corpus with warm memory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message naming the flag
    return kExitUsage;
  }

  try {
    if (opt->parsed()) return cmd_optimize(opt_args);
    if (batch->parsed()) return cmd_batch(batch_args);
    if (report->parsed()) return cmd_report(report_args);
    if (inspect->parsed()) return cmd_memory_inspect(memory_file);
    if (gen->parsed()) return cmd_gen_synthetic(gen_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.message << '\n';
    return kExitUsage;
  } catch (const OracleError& e) {
    std::cerr << "error: OracleUnavailable: " << e.what() << '\n';
    return kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitUsage;  // unreachable: require_subcommand guarantees a branch
}
