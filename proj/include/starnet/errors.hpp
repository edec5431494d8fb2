#pragma once

#include <stdexcept>
#include <string>

namespace starnet {

// Invalid hyperparameters or an inconsistent model/training configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A tensor does not have the shape an operation requires.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A runtime argument (crop size, metric window, synthesis range) is out of range.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A dataset directory cannot be turned into a paired manifest.
struct IngestionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace starnet
