// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "floq/envs.hpp"

using namespace floq;

TEST_CASE("chain constructor contract") {
  const TabularMDP mdp = make_chain(3, 0.9);
  CHECK(mdp.num_states == 3);
  CHECK(mdp.num_actions == 2);
  CHECK(mdp.terminal[2] == 1);
  // reward 1 on entering the goal
  CHECK(mdp.reward(1, 1) == 1.0);
  CHECK(mdp.reward(0, 1) == 0.0);
  CHECK(mdp.transition[1](0, 1) == 1.0);
  CHECK(mdp.transition[0](0, 0) == 1.0);  // left from the first state stays
}

TEST_CASE("gridworld transition rows are stochastic") {
  const TabularMDP mdp = make_gridworld(5, 5, 0.1, 0.99);
  for (int a = 0; a < mdp.num_actions; ++a)
    for (int s = 0; s < mdp.num_states; ++s)
      CHECK(std::abs(mdp.transition[a].row(s).sum() - 1.0) <= 1e-12);
}

TEST_CASE("terminal states absorb with zero reward over long rollouts") {
  const TabularMDP mdp = make_gridworld(4, 4, 0.2, 0.95);
  RngStream rng(1, "test.absorb");
  int s = mdp.goal_state;
  Scalar total = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int a = static_cast<int>(rng.uniform_below(mdp.num_actions));
    total += mdp.reward(s, a);
    s = sample_state(mdp.transition[a].row(s).transpose(), rng);
  }
  CHECK(s == mdp.goal_state);
  CHECK(total == 0.0);
}

TEST_CASE("invalid tabular MDPs are rejected") {
  TabularMDP mdp = make_chain(3, 0.9);
  mdp.transition[0](0, 0) = 0.5;  // row no longer sums to 1
  CHECK_THROWS_AS(validate(mdp), std::invalid_argument);
}

TEST_CASE("point-maze rewards follow the sparse -1/0 convention") {
  const ContinuousEnv env = make_point_maze(0.99, {});
  Vector s = env.reset();
  Vector toward = env.expert_action(s);
  const auto step = env.step(s, toward);
  CHECK(step.reward == -1.0);
  CHECK(!step.terminal);
  // stepping inside the goal region pays 0 and terminates (Q_max = 0)
  Vector near_goal(2);
  near_goal << 0.85, 0.85;
  const auto last = env.step(near_goal, env.expert_action(near_goal));
  CHECK(last.reward == 0.0);
  CHECK(last.terminal);
}

TEST_CASE("maze walls block movement") {
  const ContinuousEnv env = make_point_maze(0.99, default_maze_walls());
  Vector below(2);
  below << 0.3, 0.40;
  Vector up(2);
  up << 0.0, 1.0;
  const auto step = env.step(below, up);
  CHECK(step.next[1] <= 0.45);  // could not cross into the wall band
}

TEST_CASE("maze expert reaches the goal through the detour") {
  const ContinuousEnv env = make_point_maze(0.99, default_maze_walls());
  Vector s = env.reset();
  bool reached = false;
  for (int t = 0; t < env.horizon; ++t) {
    const auto step = env.step(s, env.expert_action(s));
    if (step.terminal) {
      reached = true;
      break;
    }
    s = step.next;
  }
  CHECK(reached);
}

TEST_CASE("bandit-chain expert reaches the goal") {
  const ContinuousEnv env = make_bandit_chain(0.99);
  Vector s = env.reset();
  int steps = 0;
  for (; steps < env.horizon; ++steps) {
    const auto step = env.step(s, env.expert_action(s));
    if (step.terminal) break;
    s = step.next;
  }
  CHECK(steps < env.horizon);
}

TEST_CASE("make_env dispatches families and rejects unknown ones") {
  const Env chain = make_env("chain", {{"n", "4"}, {"gamma", "0.9"}});
  CHECK(std::get<TabularMDP>(chain).num_states == 4);
  const Env maze = make_env("point-maze", {});
  CHECK(std::get<ContinuousEnv>(maze).family == "point-maze");
  CHECK(feature_state_dim(chain) == 4);
  CHECK(feature_action_dim(maze) == 2);
  CHECK_THROWS_AS((void)make_env("mountain-car", {}), ConfigError);
}
