#pragma once

#include <stdexcept>
#include <string>

namespace medrx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class DegenerateBoxError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Bad user configuration (thresholds out of range, empty lexicon, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data: weight files, lexicon CSV, annotations, images.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UndefinedReferenceError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace medrx
