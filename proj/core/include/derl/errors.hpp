#pragma once

#include <stdexcept>
#include <string>

namespace derl {

// Error families map onto the CLI exit codes:
//   ConfigError -> 2, DataError -> 3, NumericError -> 4.
// Anything else escaping to main is reported as an internal error (exit 1).

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Shape/dimension mismatches between tensors, states and networks.
class ShapeError : public ConfigError {
public:
  explicit ShapeError(const std::string& what) : ConfigError(what) {}
};

// Protocol violations: incomplete streams, empty histories, missing warm-up.
class StateError : public DataError {
public:
  explicit StateError(const std::string& what) : DataError(what) {}
};

// Wealth dropped to zero or below during an environment transition.
class BankruptcyError : public NumericError {
public:
  explicit BankruptcyError(const std::string& what) : NumericError(what) {}
};

// Zero-dispersion reward or metrics windows.
class DegenerateError : public NumericError {
public:
  explicit DegenerateError(const std::string& what) : NumericError(what) {}
};

}  // namespace derl
