#pragma once

#include <stdexcept>
#include <string>

namespace pw {

// Bad call-site arguments: shape mismatches, out-of-range indices, labels.
class ArgumentError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Malformed on-disk data (PWV1 volumes, parameter files, manifests, configs).
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Non-finite intermediates, divergence, singular systems.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace pw
