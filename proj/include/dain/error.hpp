#pragma once

#include <stdexcept>
#include <string>

namespace dain {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or rank mismatch between tensors.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// Invalid argument value (out-of-range label, empty view list, bad crop, ...).
class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

/// Operation invoked without the state it requires (e.g. backward without a
/// forward cache).
class StateError : public Error {
public:
    explicit StateError(const std::string& msg) : Error(msg) {}
};

/// Non-finite values or degenerate statistics where finite output is promised.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

/// Affine alignment failed (singular normal equations, no gradient signal).
class AlignmentError : public Error {
public:
    explicit AlignmentError(const std::string& msg) : Error(msg) {}
};

/// Invalid network specification.
class SpecError : public Error {
public:
    explicit SpecError(const std::string& msg) : Error(msg) {}
};

/// Train/test partitioning failed.
class SplitError : public Error {
public:
    explicit SplitError(const std::string& msg) : Error(msg) {}
};

/// View-window sampling cannot satisfy the request.
class SamplingError : public Error {
public:
    explicit SamplingError(const std::string& msg) : Error(msg) {}
};

/// Evaluation over an unusable test set.
class EvalError : public Error {
public:
    explicit EvalError(const std::string& msg) : Error(msg) {}
};

/// Statistic requested over an empty domain.
class StatError : public Error {
public:
    explicit StatError(const std::string& msg) : Error(msg) {}
};

/// File or directory I/O failure.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace dain
