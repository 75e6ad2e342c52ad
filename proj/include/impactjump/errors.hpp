#pragma once

#include <stdexcept>
#include <string>

namespace impactjump {

/// Vector or matrix sizes do not agree with the model.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A mathematical precondition failed (rank-deficient Jacobian, D < 3, ...).
/// The CLI maps every subclass to exit code 2.
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularConfigurationError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class AssumptionError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

class InvalidIimError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

}  // namespace impactjump
