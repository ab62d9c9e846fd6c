// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace floq {

// All arithmetic runs in 64-bit floating point.
using Scalar = double;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

/// Configuration or file-format problem. CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value reached a place where it must not be. CLI exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One offline sample; the atom of all training.
struct Transition {
  Vector state;
  Vector action;
  Scalar reward = 0.0;
  Vector next_state;
  bool terminal = false;
};

/// Column-per-sample minibatch in network feature space.
struct Batch {
  Matrix states;       // d_s x B
  Matrix actions;      // d_a x B
  Vector rewards;      // B
  Matrix next_states;  // d_s x B
  std::vector<std::uint8_t> terminal;  // B

  Eigen::Index size() const { return rewards.size(); }
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace floq
