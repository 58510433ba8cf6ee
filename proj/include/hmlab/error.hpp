#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace hmlab {

// Base of every error raised by the library. `module()` names the subsystem
// that raised it (expr, geometry, mapcalc, identities, quadrature, problems,
// cli) so front ends can report where a failure originated.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error("[" + module + "] " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Syntax error in an expression or problem document; carries the byte offset
// (expressions) or the 1-based line number (documents).
class ParseError : public Error {
 public:
  ParseError(std::string module, const std::string& message, std::size_t offset)
      : Error(std::move(module), message), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifierError : public ParseError {
 public:
  UnknownIdentifierError(const std::string& token, std::size_t offset)
      : ParseError("expr",
                   "unknown identifier '" + token + "' at byte " + std::to_string(offset),
                   offset),
        token_(token) {}

  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

// log/sqrt of a negative number, division by zero, unbound parameter, ...
class DomainError : public Error {
 public:
  using Error::Error;
};

class SingularMetricError : public Error {
 public:
  using Error::Error;
};

// Dimension mismatches, positivity violations, malformed problem data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An identity was requested on a problem that violates its applicability
// predicate.
class InapplicableError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmlab
