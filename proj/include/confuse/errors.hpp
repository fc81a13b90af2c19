#pragma once

#include <stdexcept>

namespace confuse {

// Error taxonomy. The CLI maps these to distinct exit codes (see tools/).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or size mismatch between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Malformed or unusable input data.
class DataError : public Error {
public:
    using Error::Error;
};

// Rank collapse, non-finite values, failed convergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace confuse
