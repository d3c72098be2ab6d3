// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fusion {

// Base for every failure the library reports. Callers that only need a message
// catch this; tests match on the concrete type.
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
  DimensionMismatch(const std::string& what, std::size_t expected, std::size_t got)
      : Error(what + ": expected dimension " + std::to_string(expected) + ", got " +
              std::to_string(got)) {}
};

// A sigma value outside the range where the Gaussian being sampled exists.
class Infeasible : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or state. Carries the step at which it was detected.
class Divergence : public Error {
 public:
  Divergence(const std::string& what, long step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace fusion
