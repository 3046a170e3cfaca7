#pragma once

#include <stdexcept>
#include <string>

namespace trialmend {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// ---- document parsing -----------------------------------------------------

/// The input is not syntactically valid (bad JSON, wrong top-level shape).
class MalformedDocument : public Error {
 public:
  explicit MalformedDocument(const std::string& what) : Error(what) {}
};

/// A required key is absent; `field()` names it.
class MissingField : public Error {
 public:
  explicit MissingField(const std::string& field)
      : Error("missing required field: " + field), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// An enum-valued field holds an unknown token.
class BadEnum : public Error {
 public:
  BadEnum(const std::string& field, const std::string& token)
      : Error("unknown token '" + token + "' for field " + field) {}
};

// ---- modification application ---------------------------------------------

/// Two modifications claim the same slot of the protocol.
class ConflictingSlot : public Error {
 public:
  explicit ConflictingSlot(const std::string& what) : Error(what) {}
};

/// A modification references a list index the base protocol does not have.
class IndexOutOfRange : public Error {
 public:
  explicit IndexOutOfRange(const std::string& what) : Error(what) {}
};

/// A modification set contains a member whose validation tier is Banned.
class BannedMember : public Error {
 public:
  explicit BannedMember(const std::string& what) : Error(what) {}
};

// ---- oracle ---------------------------------------------------------------

/// Base for scoring-backend failures; candidates hit by one are unscorable.
class OracleError : public Error {
 public:
  explicit OracleError(const std::string& what) : Error(what) {}
};

/// The scoring backend could not be reached (connect/timeout).
class TransportError : public OracleError {
 public:
  explicit TransportError(const std::string& what) : OracleError(what) {}
};

/// The scoring backend answered with something other than a probability.
class BadResponse : public OracleError {
 public:
  explicit BadResponse(const std::string& what) : OracleError(what) {}
};

/// A rule pattern in a scoring spec fails to compile.
class BadPattern : public Error {
 public:
  explicit BadPattern(const std::string& what) : Error(what) {}
};

// ---- tagged-completion parsing ---------------------------------------------

/// Base for failures while extracting a tagged block from completion text.
class TagParseError : public Error {
 public:
  explicit TagParseError(const std::string& what) : Error(what) {}
};

/// No well-formed instance of the requested schema exists in the text.
class NoBlockFound : public TagParseError {
 public:
  explicit NoBlockFound(const std::string& what) : TagParseError(what) {}
};

/// A numeric field is unparseable or a score lies outside [0, 1].
class MalformedNumber : public TagParseError {
 public:
  explicit MalformedNumber(const std::string& what) : TagParseError(what) {}
};

/// A known tag opens but never closes.
class TruncatedBlock : public TagParseError {
 public:
  explicit TruncatedBlock(const std::string& what) : TagParseError(what) {}
};

// ---- providers -------------------------------------------------------------

/// A text-completion provider failed after the bounded retries.
class ProviderFailure : public Error {
 public:
  explicit ProviderFailure(const std::string& what) : Error(what) {}
};

/// A scripted playbook has no entry for the requested call. Scripted runs are
/// meant to be total, so this signals a broken recording rather than a
/// condition to degrade around.
class PlaybookMiss : public ProviderFailure {
 public:
  explicit PlaybookMiss(const std::string& what) : ProviderFailure(what) {}
};

}  // namespace trialmend
