#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace kflearn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised for every numerical or contract failure inside the library. The
/// message is the user-facing diagnosis (e.g. "unstable Lyapunov operator").
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed inputs read from disk or the command line.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace kflearn
