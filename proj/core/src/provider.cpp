#include "trialmend/provider.hpp"

#include <fstream>

#include <httplib.h>

#include "trialmend/hash.hpp"

namespace trialmend {

namespace {

// Deterministic token accounting for replayed completions: four bytes per
// token, rounded up, never zero for non-empty text.
std::int64_t ApproxTokens(std::string_view text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

}  // namespace

void Playbook::add(PlaybookEntry entry) {
  std::tuple<std::string, int, std::string> key{
      entry.stage, entry.iteration, entry.digest.value_or("")};
  entries_.push_back(std::move(entry));
  index_.emplace(std::move(key), entries_.size() - 1);  // first add wins
}

const PlaybookEntry* Playbook::find(const std::string& stage, int iteration,
                                    const std::string& digest) const {
  auto it = index_.find({stage, iteration, digest});
  if (it == index_.end()) it = index_.find({stage, iteration, ""});
  if (it == index_.end()) return nullptr;
  return &entries_[it->second];
}

nlohmann::json Playbook::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : entries_) {
    nlohmann::json one{
        {"stage", e.stage}, {"iteration", e.iteration}, {"text", e.text}};
    if (e.digest) one["digest"] = *e.digest;
    entries.push_back(std::move(one));
  }
  return nlohmann::json{{"entries", std::move(entries)}};
}

Playbook Playbook::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("entries") ||
      !doc["entries"].is_array()) {
    throw MalformedDocument("playbook document must hold an 'entries' array");
  }
  Playbook pb;
  for (const auto& one : doc["entries"]) {
    if (!one.is_object() || !one.contains("stage") || !one.contains("text")) {
      throw MalformedDocument("playbook entry needs 'stage' and 'text'");
    }
    PlaybookEntry e;
    e.stage = one["stage"].get<std::string>();
    e.iteration = one.value("iteration", 0);
    e.text = one["text"].get<std::string>();
    if (one.contains("digest")) e.digest = one["digest"].get<std::string>();
    pb.add(std::move(e));
  }
  return pb;
}

Playbook Playbook::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedDocument("cannot read playbook file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedDocument("playbook " + path + ": " + e.what());
  }
  return from_json(doc);
}

void Playbook::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MalformedDocument("cannot write playbook file: " + path);
  out << to_json().dump(2) << '\n';
}

ScriptedProvider::ScriptedProvider(Playbook playbook)
    : playbook_(std::move(playbook)) {}

Completion ScriptedProvider::complete(const std::string& prompt,
                                      int /*max_tokens*/,
                                      const CallMeta& meta) {
  const PlaybookEntry* entry =
      playbook_.find(meta.stage, meta.iteration, short_digest(prompt));
  if (entry == nullptr) {
    throw PlaybookMiss("no recorded completion for stage '" + meta.stage +
                       "' iteration " + std::to_string(meta.iteration) +
                       " digest " + short_digest(prompt));
  }
  Completion c;
  c.text = entry->text;
  c.tokens_in = ApproxTokens(prompt);
  c.tokens_out = ApproxTokens(c.text);
  return c;
}

HttpProvider::HttpProvider(HttpProviderConfig config)
    : config_(std::move(config)) {}

std::string HttpProvider::descriptor() const {
  return "http:" + config_.base_url;
}

Completion HttpProvider::complete(const std::string& prompt, int max_tokens,
                                  const CallMeta& meta) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(0, config_.timeout_ms * 1000);
  client.set_read_timeout(config_.timeout_ms / 1000,
                          (config_.timeout_ms % 1000) * 1000);
  client.set_write_timeout(config_.timeout_ms / 1000,
                           (config_.timeout_ms % 1000) * 1000);

  nlohmann::json body{
      {"model", config_.model},
      {"max_tokens", max_tokens},
      {"metadata", {{"stage", meta.stage}, {"iteration", meta.iteration}}},
      {"messages",
       nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};

  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  auto res = client.Post("/v1/chat/completions", headers, body.dump(),
                         "application/json");
  if (!res) {
    throw ProviderFailure("completion transport error: " +
                          httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw ProviderFailure("completion endpoint returned status " +
                          std::to_string(res->status));
  }

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderFailure(std::string("completion response is not JSON: ") +
                          e.what());
  }
  Completion c;
  try {
    c.text = doc.at("choices").at(0).at("message").at("content")
                 .get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ProviderFailure("completion response missing choices[0].message.content");
  }
  if (doc.contains("usage") && doc["usage"].is_object()) {
    c.tokens_in = doc["usage"].value("prompt_tokens", std::int64_t{0});
    c.tokens_out = doc["usage"].value("completion_tokens", std::int64_t{0});
  }
  if (c.tokens_in == 0) c.tokens_in = ApproxTokens(prompt);
  if (c.tokens_out == 0) c.tokens_out = ApproxTokens(c.text);
  return c;
}

}  // namespace trialmend
