#pragma once

#include <stdexcept>
#include <string>

namespace superres {

/// Invalid input or configuration. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation could not deliver a result at the requested accuracy.
/// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class QuadratureError : public NumericalError {
 public:
  QuadratureError(const std::string& what, double achieved_error)
      : NumericalError(what + " (achieved error estimate " + std::to_string(achieved_error) + ")"),
        achieved_error_(achieved_error) {}

  double achieved_error() const noexcept { return achieved_error_; }

 private:
  double achieved_error_;
};

/// A Fisher-information term with vanishing probability but non-negligible
/// derivative. Signals x below the usable floor or a pathological matrix.
class SingularTermError : public NumericalError {
 public:
  SingularTermError(int flat_index, double p, double dp)
      : NumericalError("singular Fisher term at mode index " + std::to_string(flat_index) +
                       ": p=" + std::to_string(p) + ", dp/dx=" + std::to_string(dp)),
        flat_index_(flat_index) {}

  int flat_index() const noexcept { return flat_index_; }

 private:
  int flat_index_;
};

}  // namespace superres
