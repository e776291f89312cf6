#pragma once

#include <stdexcept>
#include <string>

namespace hev {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-domain input: bad files, negative speeds, length mismatches.
class InputError : public Error {
 public:
  using Error::Error;
};

// No admissible control exists for the request.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// A state or power left its admissible range.
class BoundViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace hev
