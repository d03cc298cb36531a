#pragma once

#include <stdexcept>
#include <string>

namespace jdtvb {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a measurement or state leaves the model's valid domain,
/// e.g. an arcsin argument outside [-1, 1] during slant projection.
struct DomainError : Error {
    using Error::Error;
};

/// Raised when an innovation covariance is singular or not positive definite
/// beyond what jitter can repair.
struct SingularInnovation : Error {
    using Error::Error;
};

/// Raised when a state covariance loses positive definiteness during
/// filtering or smoothing after the configured number of jitter retries.
struct CovarianceBreakdown : Error {
    using Error::Error;
};

/// Raised on malformed configuration input.
struct ConfigError : Error {
    using Error::Error;
};

/// Raised on malformed CSV or JSON payloads.
struct ParseError : Error {
    using Error::Error;
};

} // namespace jdtvb
