#pragma once

#include <stdexcept>
#include <string>

namespace klnn {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Determinant fell below the scale-aware singularity floor. Carries the
/// offending determinant so callers can report it.
class SingularMatrix : public Error {
public:
    SingularMatrix(const std::string& msg, double det) : Error(msg), det_(det) {}
    double det() const noexcept { return det_; }

private:
    double det_;
};

/// Bandwidth is zero (duplicate samples) or otherwise unusable.
class DegenerateBandwidth : public Error {
public:
    using Error::Error;
};

/// No contributors available for a local fit.
class EmptyNeighborhood : public Error {
public:
    using Error::Error;
};

/// The local second-moment matrix is singular; caller policy decides fallback.
class SingularSigma : public Error {
public:
    using Error::Error;
};

class RecoveryFailure : public Error {
public:
    using Error::Error;
};

class UnsupportedK : public Error {
public:
    using Error::Error;
};

/// Requested (k, d) entry absent from a bias table.
class MissingEntry : public Error {
public:
    using Error::Error;
};

/// Bias table entry exists but was computed with a different exponent form.
class FormMismatch : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class EstimationFailure : public Error {
public:
    using Error::Error;
};

class Unsupported : public Error {
public:
    using Error::Error;
};

}  // namespace klnn
