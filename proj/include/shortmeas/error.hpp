#pragma once

#include <stdexcept>
#include <string>

namespace shortmeas {

// Precondition violated by the caller (dimension or layout mismatch, bad parameter).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Fock truncation cannot hold the requested state to the required tail mass.
class CutoffTooSmall : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegratorFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace shortmeas
