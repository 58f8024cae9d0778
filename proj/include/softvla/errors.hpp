#pragma once

#include <stdexcept>
#include <string>

namespace softvla {

// Base for every error raised by the library. Subclasses map onto the
// failure categories callers are expected to distinguish.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (NaN, negative length, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Mismatched sizes, e.g. a configuration for a different number of sections.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Tendon pair that does not satisfy the incompressible-centerline constraint.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

// Object placement failed after exhausting the rejection-sampling budget.
class PlacementError : public Error {
public:
    using Error::Error;
};

// Dataset metadata missing, unreadable, or of an unknown format.
class FormatError : public Error {
public:
    using Error::Error;
};

// Stored payload (image, record) could not be decoded.
class IntegrityError : public Error {
public:
    using Error::Error;
};

// Wire-level violation of the policy or teleop protocol.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Socket failure, timeout, or peer reset.
class TransportError : public Error {
public:
    using Error::Error;
};

}  // namespace softvla
