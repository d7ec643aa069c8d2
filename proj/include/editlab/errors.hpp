#pragma once

#include <stdexcept>
#include <string>

namespace editlab {

// Base class for all recoverable failures raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dimension or structural mismatch (wrong rows/cols, non-symmetric input).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// Input expected to be symmetric positive-definite fails the check.
class DefinitenessError : public Error {
public:
    explicit DefinitenessError(const std::string& what) : Error(what) {}
};

// Degenerate input: zero vector where a direction is required, empty list, ...
class DegenerateInputError : public Error {
public:
    explicit DegenerateInputError(const std::string& what) : Error(what) {}
};

// Out-of-range index (token id beyond vocabulary, ...).
class IndexError : public Error {
public:
    explicit IndexError(const std::string& what) : Error(what) {}
};

// Generator asked for more than the space can hold (n > d orthogonal keys).
class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& what) : Error(what) {}
};

// Bad configuration file or unknown experiment name.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// Filesystem failure while reading or writing reports.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace editlab
