#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialmend/errors.hpp"

namespace trialmend {

struct Completion {
  std::string text;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
};

/// Stage/iteration metadata attached to every completion call so recorded
/// playbooks can key on where in the pipeline the call happened.
struct CallMeta {
  std::string stage;
  int iteration = 0;
};

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual Completion complete(const std::string& prompt, int max_tokens,
                              const CallMeta& meta) = 0;
  virtual std::string descriptor() const = 0;
};

/// One recorded completion. `digest` (first 16 hex chars of the prompt's
/// SHA-256) is optional: entries without it act as a fallback for any prompt
/// issued at the same (stage, iteration).
struct PlaybookEntry {
  std::string stage;
  int iteration = 0;
  std::optional<std::string> digest;
  std::string text;
};

class Playbook {
 public:
  Playbook() = default;

  void add(PlaybookEntry entry);
  /// Exact (stage, iteration, digest) match first, then the keyed fallback
  /// (stage, iteration) without digest. Empty when neither exists.
  const PlaybookEntry* find(const std::string& stage, int iteration,
                            const std::string& digest) const;

  std::size_t size() const { return entries_.size(); }

  nlohmann::json to_json() const;
  static Playbook from_json(const nlohmann::json& doc);
  static Playbook load_file(const std::string& path);
  void save_file(const std::string& path) const;

 private:
  std::vector<PlaybookEntry> entries_;
  // (stage, iteration, digest or "") -> index into entries_. First add wins.
  std::map<std::tuple<std::string, int, std::string>, std::size_t> index_;
};

/// Replays recorded completions. A prompt with no matching entry is a broken
/// recording, not a transient outage, so the miss throws PlaybookMiss rather
/// than degrading. Token counts are derived from byte lengths (4 bytes per
/// token, rounded up) so replays are deterministic.
class ScriptedProvider : public CompletionProvider {
 public:
  explicit ScriptedProvider(Playbook playbook);

  Completion complete(const std::string& prompt, int max_tokens,
                      const CallMeta& meta) override;
  std::string descriptor() const override { return "scripted"; }

  const Playbook& playbook() const { return playbook_; }

 private:
  Playbook playbook_;
};

struct HttpProviderConfig {
  std::string base_url;  // e.g. http://localhost:8080
  std::string model = "default";
  std::string api_key;  // sent as a bearer token when non-empty
  int timeout_ms = 30000;
};

/// Talks to a chat-completions style HTTP endpoint. Transport and protocol
/// errors surface as ProviderFailure; retry policy belongs to the caller.
class HttpProvider : public CompletionProvider {
 public:
  explicit HttpProvider(HttpProviderConfig config);

  Completion complete(const std::string& prompt, int max_tokens,
                      const CallMeta& meta) override;
  std::string descriptor() const override;

 private:
  HttpProviderConfig config_;
};

/// Decorator that accumulates token usage across all calls that pass through.
class MeteredProvider : public CompletionProvider {
 public:
  explicit MeteredProvider(CompletionProvider& inner) : inner_(inner) {}

  Completion complete(const std::string& prompt, int max_tokens,
                      const CallMeta& meta) override {
    Completion c = inner_.complete(prompt, max_tokens, meta);
    tokens_in_ += c.tokens_in;
    tokens_out_ += c.tokens_out;
    ++calls_;
    return c;
  }
  std::string descriptor() const override { return inner_.descriptor(); }

  std::int64_t tokens_in() const { return tokens_in_; }
  std::int64_t tokens_out() const { return tokens_out_; }
  std::int64_t calls() const { return calls_; }

 private:
  CompletionProvider& inner_;
  std::int64_t tokens_in_ = 0;
  std::int64_t tokens_out_ = 0;
  std::int64_t calls_ = 0;
};

}  // namespace trialmend
