#pragma once

#include <stdexcept>
#include <string>

namespace gradleak {

// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes of operands do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// An argument violates an operation's precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// An iterative solver hit its iteration cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, long iterations)
        : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
          iterations_(iterations) {}

    long iterations() const noexcept { return iterations_; }

private:
    long iterations_;
};

// The projection-layer update is numerically zero.
class DegenerateUpdate : public Error {
public:
    using Error::Error;
};

// The update was aggregated from too many labels: S >= min(d, C).
class AssumptionViolated : public Error {
public:
    using Error::Error;
};

// A single-sample attack was handed something that is not a rank-1 update.
class NotSingleSample : public Error {
public:
    using Error::Error;
};

// Malformed input file.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace gradleak
