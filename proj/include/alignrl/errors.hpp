#pragma once

#include <stdexcept>
#include <string>

namespace alignrl {

// Tensor/layer dimensions do not line up.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error("shape error: " + what) {}
};

// Operation called out of order (e.g. backward without a forward cache).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& what) : std::runtime_error("state error: " + what) {}
};

// NaN/Inf where finite values are required.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error("numerical error: " + what) {}
};

// Bad argument value (valid shape, invalid content).
struct ArgumentError : std::runtime_error {
    explicit ArgumentError(const std::string& what) : std::runtime_error("argument error: " + what) {}
};

// Malformed config file or unknown key.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error("config error: " + what) {}
};

}  // namespace alignrl
