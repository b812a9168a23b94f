#ifndef TRAVBEV_ERRORS_HPP
#define TRAVBEV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace travbev {

/// Base class for all pipeline errors. Subclasses map to CLI exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Missing or unreadable file; message carries the offending path.
struct IoError : Error {
  using Error::Error;
};

/// File exists but violates its schema (bad magic, bad CSV header, ...).
struct FormatError : Error {
  using Error::Error;
};

/// Invalid or inconsistent configuration (dimension mismatch, bad field).
struct ConfigError : Error {
  using Error::Error;
};

/// Frames arrived out of temporal order.
struct SequenceError : Error {
  using Error::Error;
};

/// Checkpoint file is corrupt, truncated, or version-incompatible.
struct CheckpointError : Error {
  using Error::Error;
};

/// A metric is undefined on the given input (e.g. single-class labels).
struct MetricError : Error {
  using Error::Error;
};

/// Clustering preconditions unmet (fewer points than clusters).
struct ClusterError : Error {
  using Error::Error;
};

/// Training diverged (non-finite loss).
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace travbev

#endif  // TRAVBEV_ERRORS_HPP
