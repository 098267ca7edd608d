#pragma once

#include <stdexcept>
#include <string>

namespace ctsnmm {

// Malformed or unknown configuration input.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input file does not match the expected column/record contract.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / stream failure.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset violates a semantic precondition (ids, ordering, missingness).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A model fit could not be completed (zero events, singular information, ...).
struct FitError : std::runtime_error {
  explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

// The final 2x2 system is singular or numerically unidentifiable.
struct IdentificationError : std::runtime_error {
  explicit IdentificationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ctsnmm
