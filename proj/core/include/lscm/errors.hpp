#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lscm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for the requested op.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad user-supplied input (empty expression, malformed flag value, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation's contract was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpointError : public Error {
 public:
  CorruptCheckpointError(const std::string& what, std::uint64_t offset)
      : Error("corrupt checkpoint at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lscm
