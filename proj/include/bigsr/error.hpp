#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bigsr {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Failure reported by the storage layer; carries the offending device path.
class StorageError : public Error {
public:
  StorageError(const std::string& what, std::string device)
      : Error(what + " [" + device + "]"), device_(std::move(device)) {}

  const std::string& device() const noexcept { return device_; }

private:
  std::string device_;
};

class StorageExhausted : public StorageError {
public:
  using StorageError::StorageError;
};

class NotFound : public Error {
public:
  using Error::Error;
};

class InUse : public Error {
public:
  using Error::Error;
};

class BoundsError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

/// Malformed text input; line numbers are 1-based.
class ParseError : public FormatError {
public:
  ParseError(const std::string& what, std::uint64_t line)
      : FormatError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::uint64_t line() const noexcept { return line_; }

private:
  std::uint64_t line_;
};

class CorruptionError : public Error {
public:
  using Error::Error;
};

/// Caller broke an API contract (e.g. decreasing has_next index).
class ContractViolation : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class PreconditionError : public Error {
public:
  using Error::Error;
};

class NonConvergence : public Error {
public:
  using Error::Error;
};

}  // namespace bigsr
