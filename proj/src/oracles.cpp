// SPDX-License-Identifier: Apache-2.0
#include "floq/oracles.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace floq {

namespace {

QTable run_value_iteration(const TabularMDP& mdp, Scalar tol,
                           std::vector<Scalar>* residuals) {
  require(tol > 0.0, "tolerance must be positive");
  validate(mdp);
  const int S = mdp.num_states, A = mdp.num_actions;
  QTable table;
  table.q = Matrix::Zero(S, A);
  Matrix next(S, A);
  for (int sweep = 0; sweep < 1000000; ++sweep) {
    const Vector v = table.q.rowwise().maxCoeff();
    for (int a = 0; a < A; ++a)
      next.col(a) = mdp.reward.col(a) + mdp.gamma * (mdp.transition[a] * v);
    const Scalar residual = (next - table.q).cwiseAbs().maxCoeff();
    table.q = next;
    table.residual = residual;
    if (residuals) residuals->push_back(residual);
    if (residual < tol) return table;
  }
  throw NumericalError("value iteration failed to converge");
}

}  // namespace

QTable value_iteration(const TabularMDP& mdp, Scalar tol) {
  return run_value_iteration(mdp, tol, nullptr);
}

QTable value_iteration_traced(const TabularMDP& mdp, Scalar tol,
                              std::vector<Scalar>* residuals) {
  return run_value_iteration(mdp, tol, residuals);
}

QTable policy_q_eval(const TabularMDP& mdp, const Matrix& policy, Scalar tol) {
  require(tol > 0.0, "tolerance must be positive");
  validate(mdp);
  const int S = mdp.num_states, A = mdp.num_actions;
  require(policy.rows() == S && policy.cols() == A, "policy shape mismatch");
  for (int s = 0; s < S; ++s) {
    if (std::abs(policy.row(s).sum() - 1.0) > 1e-9 ||
        policy.row(s).minCoeff() < 0.0)
      throw std::invalid_argument("policy rows must be distributions");
  }
  QTable table;
  table.q = Matrix::Zero(S, A);
  Matrix next(S, A);
  for (int sweep = 0; sweep < 10000000; ++sweep) {
    const Vector v = (table.q.array() * policy.array()).rowwise().sum();
    for (int a = 0; a < A; ++a)
      next.col(a) = mdp.reward.col(a) + mdp.gamma * (mdp.transition[a] * v);
    const Scalar residual = (next - table.q).cwiseAbs().maxCoeff();
    table.q = next;
    table.residual = residual;
    if (residual < tol) return table;
  }
  throw NumericalError("policy evaluation failed to converge");
}

Matrix greedy_policy(const QTable& table, int num_actions) {
  Matrix policy = Matrix::Zero(table.q.rows(), num_actions);
  for (int s = 0; s < table.q.rows(); ++s)
    policy(s, table.greedy_action(s)) = 1.0;
  return policy;
}

std::vector<McEstimate> mc_policy_eval(
    const ContinuousEnv& env, const ContinuousPolicy& policy,
    const std::vector<std::pair<Vector, Vector>>& probes,
    std::int64_t episodes, Scalar gamma, RngStream& rng) {
  require(episodes >= 1, "episodes must be positive");
  (void)rng;  // the toy continuous dynamics are deterministic
  std::vector<McEstimate> out;
  out.reserve(probes.size());
  for (const auto& [s0, a0] : probes) {
    Scalar sum = 0.0, sum_sq = 0.0;
    for (std::int64_t e = 0; e < episodes; ++e) {
      Scalar ret = 0.0, disc = 1.0;
      Vector s = s0;
      Vector a = a0;
      for (int t = 0; t < env.horizon; ++t) {
        const auto step = env.step(s, a);
        ret += disc * step.reward;
        disc *= gamma;
        if (step.terminal) break;
        s = step.next;
        a = policy(s);
      }
      sum += ret;
      sum_sq += ret * ret;
    }
    McEstimate est;
    est.episodes = episodes;
    est.mean = sum / static_cast<Scalar>(episodes);
    const Scalar var =
        std::max(0.0, sum_sq / static_cast<Scalar>(episodes) - est.mean * est.mean);
    est.std_error = episodes > 1
                        ? std::sqrt(var / static_cast<Scalar>(episodes - 1))
                        : 0.0;
    out.push_back(est);
  }
  return out;
}

void save_qtable_csv(const QTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open qtable file: " + path.string());
  out << "s,a,q\n";
  char buf[64];
  for (int s = 0; s < table.q.rows(); ++s)
    for (int a = 0; a < table.q.cols(); ++a) {
      std::snprintf(buf, sizeof(buf), "%.17g", table.q(s, a));
      out << s << ',' << a << ',' << buf << '\n';
    }
}

}  // namespace floq
