#pragma once

#include <stdexcept>
#include <string>

namespace qpsynth {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file does not follow the expected layout (bad header, magic, version).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Data content is invalid (non-finite values, empty matrix, inconsistent files).
class DataError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its documented domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Matrix or recording dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Signal has zero variance or collinear structure where a test needs spread.
class DegenerateSignalError : public Error {
 public:
  using Error::Error;
};

/// Series is shorter than an operation's minimum length.
class SegmentTooShortError : public Error {
 public:
  using Error::Error;
};

/// A singular value is too small to invert the spatial map.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

/// Factorization failed even after jitter escalation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Every hyperparameter start failed during a segment fit.
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace qpsynth
