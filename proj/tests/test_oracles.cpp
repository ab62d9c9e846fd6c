// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "floq/dataset.hpp"
#include "floq/oracles.hpp"

using namespace floq;

namespace {

/// Test-local Monte-Carlo estimate of Q^pi(s, a) for tabular MDPs. Kept
/// independent of policy_q_eval on purpose.
std::pair<Scalar, Scalar> tabular_mc(const TabularMDP& mdp, const Matrix& policy,
                                     int s0, int a0, int episodes, int horizon,
                                     RngStream& rng) {
  Scalar sum = 0.0, sum_sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    int s = s0;
    int a = a0;
    Scalar ret = 0.0, disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      if (mdp.terminal[s]) break;
      ret += disc * mdp.reward(s, a);
      disc *= mdp.gamma;
      s = sample_state(mdp.transition[a].row(s).transpose(), rng);
      // sample next action from the policy
      const Scalar u = rng.uniform();
      Scalar acc = 0.0;
      a = mdp.num_actions - 1;
      for (int cand = 0; cand < mdp.num_actions; ++cand) {
        acc += policy(s, cand);
        if (u < acc) {
          a = cand;
          break;
        }
      }
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const Scalar mean = sum / episodes;
  const Scalar var = std::max(0.0, sum_sq / episodes - mean * mean);
  return {mean, std::sqrt(var / std::max(1, episodes - 1))};
}

TabularMDP single_absorbing_state() {
  TabularMDP mdp;
  mdp.num_states = 1;
  mdp.num_actions = 1;
  mdp.gamma = 0.9;
  mdp.family = "absorbing";
  mdp.goal_state = 0;
  mdp.reward = Matrix::Zero(1, 1);
  mdp.terminal = {1};
  mdp.transition = {Matrix::Ones(1, 1)};
  mdp.initial = Vector::Ones(1);
  return mdp;
}

}  // namespace

TEST_CASE("absorbing zero-reward state has zero value") {
  const QTable q = value_iteration(single_absorbing_state(), 1e-12);
  CHECK(q.q(0, 0) == 0.0);
}

TEST_CASE("myopic limit returns the reward table") {
  const TabularMDP grid = make_gridworld(3, 3, 0.2, 0.95);
  TabularMDP myopic = grid;
  myopic.gamma = 0.0;
  const QTable q = value_iteration(myopic, 1e-12);
  CHECK((q.q - myopic.reward).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("chain(3) optimal values match the hand recursion") {
  const QTable q = value_iteration(make_chain(3, 0.9), 1e-12);
  CHECK(q.q(1, 1) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(q.q(0, 1) == doctest::Approx(0.9).epsilon(1e-10));
  CHECK(q.q(0, 0) == doctest::Approx(0.81).epsilon(1e-10));
}

TEST_CASE("bellman residual is monotone non-increasing") {
  std::vector<Scalar> residuals;
  (void)value_iteration_traced(make_gridworld(5, 5, 0.1, 0.99), 1e-10,
                               &residuals);
  for (std::size_t i = 1; i < residuals.size(); ++i)
    CHECK(residuals[i] <= residuals[i - 1] + 1e-13);
}

TEST_CASE("value iteration is invariant to state relabeling") {
  RngStream rng(31, "test.perm");
  // random MDP
  const int S = 6, A = 3;
  TabularMDP mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.gamma = 0.9;
  mdp.family = "random";
  mdp.goal_state = 0;
  mdp.terminal.assign(S, 0);
  mdp.reward = Matrix::Zero(S, A);
  mdp.transition.assign(A, Matrix::Zero(S, S));
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) {
      Scalar total = 0.0;
      for (int ns = 0; ns < S; ++ns) {
        mdp.transition[a](s, ns) = rng.uniform(0.01, 1.0);
        total += mdp.transition[a](s, ns);
      }
      mdp.transition[a].row(s) /= total;
      // renormalize exactly
      mdp.transition[a](s, S - 1) =
          1.0 - mdp.transition[a].row(s).head(S - 1).sum();
      mdp.reward(s, a) = rng.uniform(-1.0, 1.0);
    }
  mdp.initial = Vector::Zero(S);
  mdp.initial[0] = 1.0;

  // relabel states by a fixed permutation
  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  TabularMDP relabeled = mdp;
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) {
      relabeled.reward(perm[s], a) = mdp.reward(s, a);
      for (int ns = 0; ns < S; ++ns)
        relabeled.transition[a](perm[s], perm[ns]) = mdp.transition[a](s, ns);
    }
  const QTable q = value_iteration(mdp, 1e-12);
  const QTable qp = value_iteration(relabeled, 1e-12);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      CHECK(qp.q(perm[s], a) == doctest::Approx(q.q(s, a)).epsilon(1e-9));
}

TEST_CASE("uniform policy on a symmetric MDP has equal state values") {
  TabularMDP mdp;
  mdp.num_states = 2;
  mdp.num_actions = 2;
  mdp.gamma = 0.9;
  mdp.family = "symmetric";
  mdp.goal_state = -1;
  mdp.terminal = {0, 0};
  mdp.reward = Matrix::Ones(2, 2);
  mdp.transition.assign(2, Matrix::Zero(2, 2));
  // action 0 stays, action 1 swaps, identically from both states
  mdp.transition[0] = Matrix::Identity(2, 2);
  mdp.transition[1] << 0, 1, 1, 0;
  mdp.initial = Vector::Constant(2, 0.5);
  const Matrix uniform = Matrix::Constant(2, 2, 0.5);
  const QTable q = policy_q_eval(mdp, uniform, 1e-12);
  CHECK(q.q.row(0).mean() == doctest::Approx(q.q.row(1).mean()).epsilon(1e-10));
}

TEST_CASE("evaluating the greedy policy of Q* recovers Q*") {
  const TabularMDP mdp = make_gridworld(4, 4, 0.1, 0.95);
  const QTable qstar = value_iteration(mdp, 1e-11);
  const QTable qpi = policy_q_eval(mdp, greedy_policy(qstar, mdp.num_actions),
                                   1e-11);
  CHECK((qstar.q - qpi.q).cwiseAbs().maxCoeff() < 2e-11 / (1 - mdp.gamma));
}

TEST_CASE("policy evaluation agrees with 100k-episode Monte Carlo") {
  const TabularMDP mdp = make_gridworld(4, 4, 0.1, 0.9);
  const Matrix uniform =
      Matrix::Constant(mdp.num_states, mdp.num_actions, 0.25);
  const QTable q = policy_q_eval(mdp, uniform, 1e-10);
  RngStream rng(33, "test.mc");
  const auto [mc_mean, mc_se] = tabular_mc(mdp, uniform, 0, 3, 100000, 400, rng);
  CHECK(std::abs(mc_mean - q.q(0, 3)) <= 3.0 * std::max(mc_se, 1e-6));
}

TEST_CASE("mc_policy_eval limits") {
  // deterministic env and policy: zero standard error
  const ContinuousEnv chain = make_bandit_chain(0.95);
  const ContinuousPolicy expert = [&](const Vector& s) {
    return chain.expert_action(s);
  };
  RngStream rng(34, "test.mc2");
  const auto ests = mc_policy_eval(chain, expert,
                                   {{chain.reset(), chain.expert_action(chain.reset())}},
                                   64, chain.gamma, rng);
  REQUIRE(ests.size() == 1);
  CHECK(ests[0].std_error == 0.0);

  // starting at the goal boundary: first step terminates with reward 0
  Vector at_goal(1);
  at_goal << 0.89;
  const auto zero = mc_policy_eval(chain, expert,
                                   {{at_goal, chain.expert_action(at_goal)}}, 16,
                                   chain.gamma, rng);
  CHECK(zero[0].mean == 0.0);
  CHECK(zero[0].std_error == 0.0);
}

TEST_CASE("open-maze expert return matches the geometric closed form") {
  const ContinuousEnv maze = make_point_maze(0.97, {});
  const ContinuousPolicy expert = [&](const Vector& s) {
    return maze.expert_action(s);
  };
  const Vector s0 = maze.reset();
  RngStream rng(35, "test.mc3");
  const auto ests = mc_policy_eval(maze, expert, {{s0, maze.expert_action(s0)}},
                                   8, maze.gamma, rng);
  // steps to goal along the straight path
  const Scalar dist = (maze.goal - s0).norm() - maze.goal_radius;
  const int T = static_cast<int>(std::ceil(dist / maze.step_scale));
  const Scalar want = -(1.0 - std::pow(maze.gamma, T - 1)) / (1.0 - maze.gamma);
  CHECK(ests[0].mean == doctest::Approx(want).epsilon(1e-12));
  CHECK(ests[0].std_error == 0.0);
}

TEST_CASE("qtable exports as s,a,q CSV") {
  const QTable q = value_iteration(make_chain(3, 0.9), 1e-10);
  const auto path = std::filesystem::temp_directory_path() / "floq_q.csv";
  save_qtable_csv(q, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "s,a,q");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 6);
  std::filesystem::remove(path);
}
