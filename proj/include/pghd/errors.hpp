#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pghd {

/// Input failed a domain invariant. `field()` names the offending field.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed file content. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& message)
      : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " +
                           message),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Header or column layout does not match the documented schema.
class SchemaError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Model artifact written by an incompatible format version.
class VersionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Feature vector and model disagree on slot order.
class FingerprintError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class LookupError : public std::out_of_range {
  using std::out_of_range::out_of_range;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pghd
