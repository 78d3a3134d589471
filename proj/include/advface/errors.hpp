#pragma once

#include <stdexcept>
#include <string>

namespace advface {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or resolutions that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Values outside their domain: NaN latents, out-of-range pixels, bad config.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when a component cannot provide the requested derivative order.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace advface
