#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace microflow {

// Base for every error the library raises. Subclasses let callers (and the
// CLI) distinguish bad input from internal faults.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidOrderError : public Error {
public:
  using Error::Error;
};

class NotFoundError : public Error {
public:
  using Error::Error;
};

// Raised when an engine invariant is broken. Indicates a bug, not bad input.
class InvariantError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Missing or inconsistent stage artifact in the CLI pipeline.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& what)
      : Error(what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace microflow
