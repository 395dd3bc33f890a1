#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedselect {

// Invalid run configuration or architecture. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed data passed to an operation (bad labels, empty batches).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal contract: dimension mismatch, non-monotone masks.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Called with violated preconditions of an oracle (e.g. masks not frozen).
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedselect
