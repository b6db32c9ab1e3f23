#pragma once

#include <stdexcept>
#include <string>

namespace conformer {

// Shape or extent disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller violated an operation precondition (negative hop count, non-scalar loss, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data is malformed (negative edge weight, out-of-vocabulary id, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Configuration value out of range or unknown key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File could not be read or parsed; message carries file and line.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A primitive produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace conformer
