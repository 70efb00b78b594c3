#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace measfid {

/// Broad failure classes. The CLI maps these onto its exit codes.
enum class ErrorCategory { validation, io, numerical };

enum class ErrorKind {
  not_psd,
  not_complete,
  not_hermitian,
  not_normalized,
  not_orthonormal,
  dim_mismatch,
  out_of_range,
  bad_distribution,
  no_output_states,
  insufficient_conditioned_samples,
  zero_trials,
  schema,
  io,
  numerical_failure,
  non_convergent,
  projection_failed,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::not_psd: return "NotPsd";
    case ErrorKind::not_complete: return "NotComplete";
    case ErrorKind::not_hermitian: return "NotHermitian";
    case ErrorKind::not_normalized: return "NotNormalized";
    case ErrorKind::not_orthonormal: return "NotOrthonormal";
    case ErrorKind::dim_mismatch: return "DimMismatch";
    case ErrorKind::out_of_range: return "OutOfRange";
    case ErrorKind::bad_distribution: return "BadDistribution";
    case ErrorKind::no_output_states: return "NoOutputStates";
    case ErrorKind::insufficient_conditioned_samples: return "InsufficientConditionedSamples";
    case ErrorKind::zero_trials: return "ZeroTrials";
    case ErrorKind::schema: return "SchemaError";
    case ErrorKind::io: return "IoError";
    case ErrorKind::numerical_failure: return "NumericalFailure";
    case ErrorKind::non_convergent: return "NonConvergent";
    case ErrorKind::projection_failed: return "ProjectionFailed";
  }
  return "Unknown";
}

inline ErrorCategory category_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::schema:
    case ErrorKind::io:
      return ErrorCategory::io;
    case ErrorKind::numerical_failure:
    case ErrorKind::non_convergent:
    case ErrorKind::projection_failed:
      return ErrorCategory::numerical;
    default:
      return ErrorCategory::validation;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

/// An effect has an eigenvalue below -tol_psd.
class NotPsd : public Error {
 public:
  NotPsd(std::size_t index, double min_eig)
      : Error(ErrorKind::not_psd, "effect " + std::to_string(index) +
                                      " has minimum eigenvalue " + std::to_string(min_eig)),
        index_(index),
        min_eig_(min_eig) {}

  std::size_t index() const noexcept { return index_; }
  double min_eig() const noexcept { return min_eig_; }

 private:
  std::size_t index_;
  double min_eig_;
};

/// The effects do not sum to the identity.
class NotComplete : public Error {
 public:
  explicit NotComplete(double residual)
      : Error(ErrorKind::not_complete,
              "completeness residual " + std::to_string(residual)),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace measfid
