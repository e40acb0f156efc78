#pragma once

#include <stdexcept>
#include <string>

namespace pln {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent or invalid matrix shapes, rank deficiency, bad config values.
class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// A mean-rate entry exceeded the representable budget (> 1e300).
class OverflowError : public Error {
public:
  OverflowError(const std::string& msg, long row, long col)
      : Error(msg), row_(row), col_(col) {}
  long row() const noexcept { return row_; }
  long col() const noexcept { return col_; }

private:
  long row_, col_;
};

// Parameter outside its domain (non-SPD precision, nonpositive sdev, ...).
class ParameterDomainError : public Error {
public:
  explicit ParameterDomainError(const std::string& msg) : Error(msg) {}
};

// Per-row variational profiling did not reach the gradient tolerance.
class ProfilingError : public Error {
public:
  ProfilingError(const std::string& msg, long row, double grad_norm)
      : Error(msg), row_(row), grad_norm_(grad_norm) {}
  long row() const noexcept { return row_; }
  double grad_norm() const noexcept { return grad_norm_; }

private:
  long row_;
  double grad_norm_;
};

// Factorization or inversion failure; carries the offending row when known.
class LinAlgError : public Error {
public:
  explicit LinAlgError(const std::string& msg, long row = -1)
      : Error(msg), row_(row) {}
  long row() const noexcept { return row_; }

private:
  long row_;
};

// Jitter escalation exhausted while repairing an SPD matrix.
class SpdRepairError : public Error {
public:
  explicit SpdRepairError(const std::string& msg) : Error(msg) {}
};

// Random sampling produced an unusable value (e.g. rate overflow).
class SamplingError : public Error {
public:
  SamplingError(const std::string& msg, long row, long col)
      : Error(msg), row_(row), col_(col) {}
  long row() const noexcept { return row_; }
  long col() const noexcept { return col_; }

private:
  long row_, col_;
};

// Malformed input file; carries 1-based cell coordinates when applicable.
class ParseError : public Error {
public:
  explicit ParseError(const std::string& msg, long row = -1, long col = -1)
      : Error(msg), row_(row), col_(col) {}
  long row() const noexcept { return row_; }
  long col() const noexcept { return col_; }

private:
  long row_, col_;
};

}  // namespace pln
