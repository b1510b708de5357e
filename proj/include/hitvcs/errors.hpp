#pragma once

#include <stdexcept>
#include <string>

namespace hitvcs {

/// Tensor or frame dimensions do not fit the operation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Argument outside its mathematical domain (ratio, epoch, sizes...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Inconsistent model / run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable or malformed input data (frames, archives, checkpoints).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training diverged.
struct NanLossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hitvcs
