#pragma once

#include <stdexcept>
#include <string>

namespace pear {

/// Operand shapes are incompatible with the operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An index lies outside its valid range for the grid.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// A configuration value is unusable (resolution too small, bad window size, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A call violated an API contract (backward on a non-scalar, missing input, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A NaN or infinity appeared where only finite values are acceptable.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pear
