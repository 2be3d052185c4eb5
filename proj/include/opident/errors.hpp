#pragma once

#include <stdexcept>
#include <string>

namespace opident {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Operands of incompatible size.
class DimensionError : public Error
{
public:
    using Error::Error;
};

/// A value violates the structural invariant of its type (symmetry, unitarity, ...).
class StructureError : public Error
{
public:
    using Error::Error;
};

/// Numerical backend failure (non-finite values, failed factorization).
class ComputationError : public Error
{
public:
    using Error::Error;
};

/// An eigenphase sits on the branch cut of the principal logarithm.
class BranchAmbiguityError : public ComputationError
{
public:
    using ComputationError::ComputationError;
};

/// Bad user-supplied parameter (theta outside [0,1], unknown field kind, ...).
class ArgumentError : public Error
{
public:
    using Error::Error;
};

} // namespace opident
