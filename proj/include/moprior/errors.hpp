#pragma once

#include <stdexcept>
#include <string>

namespace moprior {

// Error taxonomy. Each class maps to a distinct CLI exit code, so keep the
// set small and stable.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (BVH, container, JSON). Carries a line number when
// the format is line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// An invariant on a domain value does not hold (non-finite coordinate,
// bad shape, empty sequence).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Two objects that must agree in shape do not (vector dims, joint counts,
// segment length vs. model).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure: missing file, unwritable path, short read.
class IoError : public Error {
 public:
  using Error::Error;
};

// A config value is out of range or a required key is missing.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File carries an incompatible format version or model/runtime mismatch
// (segment length, fps).
class VersionError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training/optimization (NaN loss, degenerate
// rotation input).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace moprior
