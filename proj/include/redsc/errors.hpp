#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace redsc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes, architecture or configuration values that cannot work together.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the byte offset at which parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Non-finite values or a diverging optimisation.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Two independent computations that must agree did not.
class InternalConsistencyError : public Error {
public:
    using Error::Error;
};

}  // namespace redsc
