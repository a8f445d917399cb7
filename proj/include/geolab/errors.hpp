#pragma once

#include <stdexcept>
#include <string>

namespace geolab {

/// Base class for every failure raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A chart point outside the manifold's coordinate domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Geodesic integration left the chart before the requested duration.
class ChartExitError : public Error {
public:
    ChartExitError(const std::string& what, double exit_time)
        : Error(what), exit_time_(exit_time) {}
    double exit_time() const noexcept { return exit_time_; }

private:
    double exit_time_;
};

/// A segment is not a short geodesic, or the boundary value solver failed.
/// Callers are expected to subdivide.
class NotShortError : public Error {
public:
    using Error::Error;
};

/// A numerical decision (kernel dimension, isolation) could not be made
/// at the configured tolerances.
class UndecidedError : public Error {
public:
    using Error::Error;
};

/// An operation's precondition is violated by its input.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Hypotheses required by a construction do not hold for the given data.
class HypothesisError : public Error {
public:
    using Error::Error;
};

/// Descent made no progress before converging.
class StagnationError : public Error {
public:
    using Error::Error;
};

/// Integrator accuracy checks (symplecticity, closure) failed.
class AccuracyError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace geolab
