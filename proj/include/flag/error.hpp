#pragma once

#include "flag/config.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>

FLAG_NAMESPACE_BEGIN

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed textual input. Carries the 1-based line number it refers to.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Binary file that is truncated or has an unexpected header.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition on an in-memory value (shapes, sizes, ranges).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity showed up where training cannot continue.
class NumericError : public Error {
 public:
  using Error::Error;
};

FLAG_NAMESPACE_END
