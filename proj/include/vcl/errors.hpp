#pragma once

#include <stdexcept>
#include <string>

namespace vcl {

// Error taxonomy used across the library. All derive from std::runtime_error
// so callers that don't care can catch one base type.

// Shape/extent disagreement between operands.
struct DimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A call-contract violation (bad argument value, mismatched structures, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerically degenerate input (zero vector to normalize, too-short sequence).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed on-disk data; message carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A label subset request that leaves some class empty.
struct InsufficientLabelsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (unknown key, out-of-range value).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vcl
