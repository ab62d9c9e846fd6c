// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "floq/common.hpp"
#include "floq/envs.hpp"
#include "floq/rng.hpp"

// Independent ground-truth machinery. Deliberately free of any dependency on
// the network or critic code; sharing that code would void the oracle.

namespace floq {

struct QTable {
  Matrix q;  // num_states x num_actions
  Scalar residual = 0.0;
  Vector state_values() const { return q.rowwise().maxCoeff(); }
  int greedy_action(int s) const {
    int best = 0;
    q.row(s).maxCoeff(&best);
    return best;
  }
};

/// Bellman optimality iteration to sup-norm residual below tol.
/// Values follow the unnormalized convention Q = E[sum gamma^t r].
QTable value_iteration(const TabularMDP& mdp, Scalar tol = 1e-10);

/// Variant that also reports the residual after every sweep.
QTable value_iteration_traced(const TabularMDP& mdp, Scalar tol,
                              std::vector<Scalar>* residuals);

/// Fixed point of the Bellman expectation operator for a stochastic tabular
/// policy (rows of `policy` are distributions over actions).
QTable policy_q_eval(const TabularMDP& mdp, const Matrix& policy,
                     Scalar tol = 1e-10);

/// Greedy tabular policy of a Q-table, as a row-stochastic matrix.
Matrix greedy_policy(const QTable& table, int num_actions);

using ContinuousPolicy = std::function<Vector(const Vector& state)>;

struct McEstimate {
  Scalar mean = 0.0;
  Scalar std_error = 0.0;
  std::int64_t episodes = 0;
};

/// Discounted-return estimates for probe (state, action) pairs: execute the
/// probe action once, then follow the policy to termination or horizon.
std::vector<McEstimate> mc_policy_eval(
    const ContinuousEnv& env, const ContinuousPolicy& policy,
    const std::vector<std::pair<Vector, Vector>>& probes,
    std::int64_t episodes, Scalar gamma, RngStream& rng);

/// QTable export as CSV rows "s,a,q" for golden-file tests.
void save_qtable_csv(const QTable& table, const std::filesystem::path& path);

}  // namespace floq
