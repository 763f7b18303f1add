#pragma once

#include <stdexcept>
#include <string>

namespace acousticpose {

// Exception hierarchy. The CLI maps each family onto a process exit code:
// ConfigError -> 2, DataError -> 3, NumericalError -> 4.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

// Shapes of two operands do not line up.
class DimensionError : public DataError {
public:
    using DataError::DataError;
};

// Audio and pose streams (or two feature streams) disagree in time.
class AlignmentError : public DataError {
public:
    using DataError::DataError;
};

class EmptyInputError : public DataError {
public:
    using DataError::DataError;
};

// Named tensors on disk do not match what the caller expects.
class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

// A caller broke a documented precondition (non-scalar loss, non-unit embeddings, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace acousticpose
