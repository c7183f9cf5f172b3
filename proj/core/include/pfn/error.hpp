#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pfn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced or consumed by a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset, embedding, vocabulary or checkpoint file.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  // 1-based line of the offending record, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfn
