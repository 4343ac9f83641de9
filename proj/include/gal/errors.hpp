#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gal {

/// Shape disagreement between operands; the message carries both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range scalar argument (temperature, step, counts).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Scene placement or rendering could not satisfy its constraints.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary file. `offset` is the byte position where decoding failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// File carries a format version this build does not understand.
class VersionError : public ParseError {
 public:
  VersionError(const std::string& format, unsigned found, std::size_t offset)
      : ParseError(format + ": unsupported version " + std::to_string(found), offset),
        found_(found) {}
  unsigned found() const noexcept { return found_; }

 private:
  unsigned found_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss during training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace gal
