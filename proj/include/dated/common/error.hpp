#pragma once

#include <stdexcept>
#include <string>

namespace dated {

// Base class for every error raised by the library. `code()` is a short
// machine-readable tag that the HTTP layer and the CLI surface verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error("invalid_argument", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

// Stored bytes do not match their recorded checksum or layout.
class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& message)
      : Error("corruption", message) {}
};

// Data dated at or after a cutoff boundary reached a consumer bound by it.
class LeakageError : public Error {
 public:
  explicit LeakageError(const std::string& message)
      : Error("leakage", message) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message)
      : Error("not_found", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message)
      : Error("numeric", message) {}
};

// Transient failure talking to an external service; callers may retry.
class RetryableError : public Error {
 public:
  explicit RetryableError(const std::string& message)
      : Error("retryable", message) {}
};

}  // namespace dated
