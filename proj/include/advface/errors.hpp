#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace advface {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input tensor does not match what a model or operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf appeared while evaluating a network. `layer` is the index of the
// offending layer in the model (or -1 when not attributable to one).
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int layer)
      : Error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed text input. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace advface
