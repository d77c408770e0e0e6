#pragma once

#include <stdexcept>
#include <string>

namespace dtigeo {

// Base of everything the library throws. The subclasses map onto the CLI exit
// codes: InputError -> 2, FormatError -> 3, NumericalError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unreadable input.
class InputError : public Error {
 public:
  using Error::Error;
};

// Shape, format or argument-range violation.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Rank deficiency, divergence, all-degenerate reductions.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dtigeo
