#pragma once

#include <stdexcept>
#include <string>

namespace petc {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad keys, ranges, file contents).
struct ConfigError : Error {
    using Error::Error;
};

/// State evaluation outside the model's admissible domain.
struct DomainError : Error {
    using Error::Error;
};

/// A certification assumption failed numerically.
struct AssumptionViolation : Error {
    using Error::Error;
};

/// The loss process broke its contract (too many consecutive losses).
struct ProtocolViolation : Error {
    using Error::Error;
};

/// A dropout trace violates the loss bound or cannot be decoded.
struct TraceError : Error {
    using Error::Error;
};

/// Malformed input file (truncated or inconsistent rows).
struct ParseError : Error {
    using Error::Error;
};

/// A caller violated a documented precondition.
struct PreconditionError : Error {
    using Error::Error;
};

/// An internal consistency check failed during verification.
struct VerificationFailure : Error {
    using Error::Error;
};

}  // namespace petc
