#pragma once

#include <stdexcept>
#include <string>

namespace canopy {

// Error hierarchy. The CLI maps these onto exit codes:
// ConfigError -> 2, InputError (and subclasses) -> 3, NumericalError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// Grids that cannot be combined (different crs_tag, geometry, pixel size).
class AlignmentError : public InputError {
 public:
  using InputError::InputError;
};

class ShapeError : public InputError {
 public:
  using InputError::InputError;
};

// Too few (or only collinear) points to build a surface.
class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace canopy
