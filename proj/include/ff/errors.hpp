#pragma once

#include <stdexcept>
#include <string>

namespace ff {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class UnknownAgentError : public Error {
public:
    using Error::Error;
};

class DuplicateAgentError : public Error {
public:
    using Error::Error;
};

/// The anchor-pair weight matrix is (numerically) singular, i.e. the
/// genericity condition on the rotated anchor offset is violated.
class SingularWeightError : public Error {
public:
    SingularWeightError(const std::string& msg, double smallest_singular_value)
        : Error(msg), smallest_singular_value_(smallest_singular_value) {}
    double smallestSingularValue() const { return smallest_singular_value_; }

private:
    double smallest_singular_value_ = 0.0;
};

class NoGenericPairError : public Error {
public:
    using Error::Error;
};

class NoCandidatesError : public Error {
public:
    using Error::Error;
};

class InconsistentBlocksError : public Error {
public:
    using Error::Error;
};

class SingularFollowerBlockError : public Error {
public:
    using Error::Error;
};

class SpectralViolationError : public Error {
public:
    SpectralViolationError(const std::string& msg, int epoch)
        : Error(msg), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_ = 0;
};

/// Scenario file problems: parse failures and semantic validation failures.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The integrator produced a non-finite state (gain/step-size instability).
class InstabilityError : public Error {
public:
    using Error::Error;
};

}  // namespace ff
