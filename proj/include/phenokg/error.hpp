#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phenokg {

enum class ErrorKind {
  Parse,               // malformed input text (file or model output)
  Validation,          // structurally valid input violating a cross-reference rule
  Domain,              // argument outside an operation's domain
  Integrity,           // record contradicts itself (offsets vs surface, dangling refs)
  DuplicateId,
  Schema,              // parsed JSON that does not match the expected shape
  BackendUnavailable,
  ReplayMiss,
  Scoring,
  Io,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Base of every library failure. The kind is what callers branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Model output that could not be turned into a result. The raw text is kept
/// verbatim for the audit log.
class OutputError : public Error {
 public:
  OutputError(ErrorKind kind, const std::string& message, std::string raw,
              std::string field = {})
      : Error(kind, message), raw_(std::move(raw)), field_(std::move(field)) {}

  const std::string& raw() const noexcept { return raw_; }
  /// Name of the offending field for schema errors; empty for parse errors.
  const std::string& field() const noexcept { return field_; }

 private:
  std::string raw_;
  std::string field_;
};

class BackendError : public Error {
 public:
  BackendError(ErrorKind kind, const std::string& message, int last_status = 0,
               int attempts = 0)
      : Error(kind, message), last_status_(last_status), attempts_(attempts) {}

  /// HTTP status of the final attempt, 0 for transport failures.
  int last_status() const noexcept { return last_status_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int last_status_;
  int attempts_;
};

}  // namespace phenokg
