#pragma once

#include <stdexcept>
#include <string>

namespace gradcritic {

// Bad input: malformed files, out-of-range arguments, incompatible shapes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericalError {
 public:
  SingularMatrixError(const std::string& what, double rcond)
      : NumericalError(what), rcond_(rcond) {}
  double rcond() const { return rcond_; }

 private:
  double rcond_;
};

// Thrown by online learners when a parameter leaves the finite range.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace gradcritic
