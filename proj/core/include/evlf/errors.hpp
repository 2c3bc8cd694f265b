#pragma once

#include <stdexcept>
#include <string>

namespace evlf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor dimension / shape contract violations.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid hyperparameters or malformed configuration values.
struct ConfigError : Error {
    using Error::Error;
};

// File format problems: bad magic, wrong sizes, checksum mismatch, corrupt records.
struct DataError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required (e.g. grad_check evaluation).
struct NumericError : Error {
    using Error::Error;
};

}  // namespace evlf
