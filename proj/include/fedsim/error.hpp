#pragma once

#include <stdexcept>

namespace fedsim {

// Incompatible matrix/parameter dimensions.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value, rejected before any compute.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data (labels out of range, bad file contents).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Text input that cannot be parsed; message carries the line number.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dirichlet splitter could not satisfy the min-size floor.
struct PartitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value reached a training update; message identifies where.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: stale cache, mismatched upload shapes.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint file rejected on load (corrupt, wrong version, wrong shapes).
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failure surfaced to the caller.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fedsim
