#pragma once

#include <stdexcept>
#include <string>

namespace hsar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

/// Raised by the Cholesky kernels; `pivot()` is the position in the permuted
/// ordering at which a nonpositive pivot was met.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(int pivot, double value)
      : Error("matrix is not positive definite: pivot " + std::to_string(pivot) +
              " has value " + std::to_string(value)),
        pivot_(pivot),
        value_(value) {}

  int pivot() const noexcept { return pivot_; }
  double value() const noexcept { return value_; }

 private:
  int pivot_;
  double value_;
};

class RankDeficientDesign : public Error {
 public:
  using Error::Error;
};

class MissingDataPresent : public Error {
 public:
  using Error::Error;
};

class NonFiniteLikelihood : public Error {
 public:
  using Error::Error;
};

class SingularInformation : public Error {
 public:
  using Error::Error;
};

/// A computation was refused because its size exceeds a configured guard.
class SizeGuard : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; messages carry the offending line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsar
