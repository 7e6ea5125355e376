#pragma once

#include <stdexcept>
#include <string>

namespace slva {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (shape, range, ids, bounds).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Input is well-formed but carries no usable information
/// (e.g. a constant curve, a cloud of zero semivariances).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// A linear-algebra step failed or was too ill-conditioned to trust.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double condition = 0.0)
        : Error(what), condition_(condition) {}

    /// Condition estimate of the offending matrix, 0 when not applicable.
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

}  // namespace slva
