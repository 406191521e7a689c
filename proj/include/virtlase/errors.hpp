#pragma once

#include <stdexcept>
#include <string>

namespace virtlase {

// Physics and numerics failures. The CLI maps these onto exit code 3.
class PhysicsError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Input outside the domain of a closed-form relation (negative linewidth, |m| > 1, ...).
class DomainError : public PhysicsError
{
public:
    using PhysicsError::PhysicsError;
};

// The magnetic field at the active region vanishes, so sigma/pi are undefined.
class QuantizationAxisError : public PhysicsError
{
public:
    QuantizationAxisError()
        : PhysicsError("quantization axis undefined: magnetic field is zero at the active region "
                       "(supply a nonzero b_offset)")
    {
    }
};

class NoThresholdError : public PhysicsError
{
public:
    using PhysicsError::PhysicsError;
};

class CalibrationError : public PhysicsError
{
public:
    using PhysicsError::PhysicsError;
};

// Carries the last iterate so callers can inspect how far the solver got.
class ConvergenceError : public PhysicsError
{
public:
    ConvergenceError(const std::string& what, double last_iterate)
        : PhysicsError(what), last_iterate_(last_iterate)
    {
    }
    double last_iterate() const { return last_iterate_; }

private:
    double last_iterate_;
};

// Bad user-facing parameters (config keys, ranges, simulation preconditions). Exit code 2.
class ParameterError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed ClickStream / calibration / metadata files.
class FormatError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Stale or tampered calibration. Exit code 4.
class IntegrityError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace virtlase
