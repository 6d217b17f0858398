#ifndef ELASTREC_ERRORS_HPP
#define ELASTREC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace elastrec {

/// Root of all library errors. The CLI maps each family onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument values or inconsistent dimensions (CLI exit code 2).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File system failures (CLI exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed raster or network files. Also mapped to exit code 3.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Numerical failures (CLI exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The harmonic system could not be factorized at the requested frequency.
class ResonanceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// An iterative reconstruction produced a non-finite objective or iterate.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : NumericalError(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace elastrec

#endif  // ELASTREC_ERRORS_HPP
