#pragma once

#include <stdexcept>
#include <string>

namespace fra {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (matmul inner extents, attention operands...).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A configuration value is invalid or inconsistent with another one.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// User-supplied data (landmarks, labels, CLI arguments) is malformed.
class InputError : public Error {
public:
    using Error::Error;
};

/// A precondition of a call was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A file could not be parsed into the expected structure.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Negative sampling found no eligible candidate.
class SamplingError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during training (non-finite loss).
class ComputeError : public Error {
public:
    using Error::Error;
};

}  // namespace fra
