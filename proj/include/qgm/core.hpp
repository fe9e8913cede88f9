#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace qgm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A structural precondition failed (node counts, factorizations, shapes).
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Invalid numeric parameter (alpha <= 0, eta == 0, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The run configuration is malformed or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A worker state became NaN/Inf during a run.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string method, long step)
      : Error("non-finite state at step " + std::to_string(step) + " (method " + method + ")"),
        method_(std::move(method)),
        step_(step) {}
  const std::string& method() const noexcept { return method_; }
  long step() const noexcept { return step_; }

 private:
  std::string method_;
  long step_;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace qgm
