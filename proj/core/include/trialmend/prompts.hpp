#pragma once

#include <map>
#include <string>
#include <vector>

namespace trialmend {

/// Named prompt templates with {{placeholder}} substitution. The default set
/// is embedded at build time from the repository's templates/ directory, so
/// the shipped text files and the compiled-in copies cannot drift. A library
/// loaded from a directory overrides embedded entries by file stem.
class PromptLibrary {
 public:
  PromptLibrary();  // embedded defaults

  /// Reads every *.txt in `dir` (template name = file stem) on top of the
  /// embedded defaults.
  static PromptLibrary from_directory(const std::string& dir);

  bool has(const std::string& name) const;
  /// Raw template text. Throws MissingField for unknown names.
  const std::string& text(const std::string& name) const;

  /// Substitutes every {{key}} occurrence. Placeholders left unresolved after
  /// substitution throw MissingField: a missing variable is a caller bug, not
  /// content to silently ship to a provider.
  std::string render(const std::string& name,
                     const std::map<std::string, std::string>& vars) const;

  std::vector<std::string> names() const;

  static const std::map<std::string, std::string>& embedded();

 private:
  std::map<std::string, std::string> templates_;
};

/// Appended to a prompt on retry attempt `n` (n >= 1) so the reissued prompt
/// hashes differently from the original and the instruction gets firmer.
std::string retry_suffix(int attempt);

}  // namespace trialmend
