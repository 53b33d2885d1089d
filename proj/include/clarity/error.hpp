#pragma once

#include <stdexcept>
#include <string>

namespace clarity {

/// Malformed input files, unknown labels, hierarchy violations.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failures inside the optimization loop or model construction.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when the validation split cannot produce a meaningful selection
/// signal (for example every dev label is identical).
class IntegrityError : public TrainingError {
public:
    using TrainingError::TrainingError;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace clarity
