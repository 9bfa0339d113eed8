#pragma once

#include <stdexcept>
#include <string>

namespace cosrec {

// Error taxonomy; the CLI maps these to exit codes (usage/shape -> 2,
// data -> 3, numeric -> 4).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : UsageError {
  using UsageError::UsageError;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cosrec
