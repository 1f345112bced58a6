#pragma once

#include <stdexcept>
#include <string>

namespace palign {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two particles share a position while the kernel is exactly singular.
class CollisionError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// The step controller needed a step below dt_min.
class StepStallError : public Error {
public:
    StepStallError(const std::string& what, double t, double dt) : Error(what), t_(t), dt_(dt) {}
    double time() const noexcept { return t_; }
    double required_dt() const noexcept { return dt_; }

private:
    double t_;
    double dt_;
};

/// Parameters outside the region where an operation is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

class EmptyClusterError : public Error {
public:
    using Error::Error;
};

class SolverToleranceError : public Error {
public:
    using Error::Error;
};

class DegenerateSupportError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed configuration or data file. `field` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : Error("config field '" + field + "': " + what), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace palign
