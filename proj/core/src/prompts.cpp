#include "trialmend/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "trialmend/errors.hpp"

namespace trialmend {

namespace {

std::string ReadWholeFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedDocument("cannot read template file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

const std::map<std::string, std::string>& PromptLibrary::embedded() {
  static const std::map<std::string, std::string> kTemplates = {
#include "prompt_templates_data.inc"
  };
  return kTemplates;
}

PromptLibrary::PromptLibrary() : templates_(embedded()) {}

PromptLibrary PromptLibrary::from_directory(const std::string& dir) {
  PromptLibrary lib;
  std::filesystem::path root(dir);
  if (!std::filesystem::is_directory(root)) {
    throw MalformedDocument("prompt directory not found: " + dir);
  }
  // Collect paths first and sort so overrides apply in a stable order.
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    lib.templates_[path.stem().string()] = ReadWholeFile(path);
  }
  return lib;
}

bool PromptLibrary::has(const std::string& name) const {
  return templates_.count(name) > 0;
}

const std::string& PromptLibrary::text(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw MissingField("prompt template: " + name);
  return it->second;
}

std::string PromptLibrary::render(
    const std::string& name,
    const std::map<std::string, std::string>& vars) const {
  const std::string& tmpl = text(name);
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    std::size_t open = tmpl.find("{{", pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string::npos) {
      // An unterminated opening brace pair is literal text, not a placeholder.
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    out.append(tmpl, pos, open - pos);
    std::string key = tmpl.substr(open + 2, close - open - 2);
    auto it = vars.find(key);
    if (it == vars.end()) {
      throw MissingField("prompt variable '" + key + "' for template " + name);
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

std::vector<std::string> PromptLibrary::names() const {
  std::vector<std::string> out;
  out.reserve(templates_.size());
  for (const auto& [name, _] : templates_) out.push_back(name);
  return out;
}

std::string retry_suffix(int attempt) {
  return "\n\nRetry " + std::to_string(attempt) +
         ": your previous reply did not match the Output Format. Respond with "
         "exactly the tags specified in the Output Format section and nothing "
         "else.";
}

}  // namespace trialmend
