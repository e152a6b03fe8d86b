#pragma once

#include <stdexcept>
#include <string>

namespace stepcount {

// Malformed file contents (bad RIFF header, truncated chunk, bad cache file).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedCodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad configuration values; the CLI maps these to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Pearson correlation with a zero-variance vector.
class UndefinedCorrelationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace stepcount
