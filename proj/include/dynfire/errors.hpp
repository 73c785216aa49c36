#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dynfire {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad dims, bad ratios, data too short for the run.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training (non-finite gradients, diverged loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// The model variant lacks the network needed by the call.
class UnsupportedVariantError : public Error {
 public:
  using Error::Error;
};

/// No admissible window in the replay buffer.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Metric undefined for the input (e.g. AUROC with a single class).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Reports computed over different validation stacks.
class ComparisonError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent raster inputs during CSV ingestion.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace dynfire
