#pragma once

#include <stdexcept>
#include <string>

namespace dattn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes (e.g. matmul inner-dimension mismatch).
struct ShapeError : Error {
    using Error::Error;
};

// Invalid model/CLI configuration (dims not divisible, odd head_dim, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

} // namespace dattn
