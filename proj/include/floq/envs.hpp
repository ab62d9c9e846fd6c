// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "floq/common.hpp"
#include "floq/rng.hpp"

namespace floq {

/// Explicit finite MDP. Terminal states self-loop with reward 0.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<Matrix> transition;    // transition[a](s, s') row-stochastic
  Matrix reward;                     // num_states x num_actions
  std::vector<std::uint8_t> terminal;
  Vector initial;                    // distribution over states
  Scalar gamma = 0.99;
  std::string family;
  int goal_state = -1;
  int horizon = 100;
};

/// Checks row-stochasticity, terminal self-loops, and the initial distribution.
void validate(const TabularMDP& mdp);

int sample_state(const Vector& distribution, RngStream& rng);

/// Axis-aligned wall rectangle for the point-maze.
struct WallBox {
  Scalar x0, y0, x1, y1;
  bool contains(Scalar x, Scalar y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

/// Deterministic continuous-state toy task with a box action space.
struct ContinuousEnv {
  std::string family;  // "point-maze" or "bandit-chain"
  int state_dim = 0;
  int action_dim = 0;
  Vector action_low;
  Vector action_high;
  Vector start;
  int horizon = 0;
  Scalar gamma = 0.99;

  // point-maze fields
  Vector goal;
  Scalar goal_radius = 0.1;
  Scalar step_scale = 0.08;
  std::vector<WallBox> walls;

  // bandit-chain fields
  Scalar chain_step = 0.2;
  Scalar chain_goal = 0.9;

  // BFS distance-to-goal field over free cells, filled at construction when
  // the maze has walls; drives the scripted expert.
  std::vector<Scalar> expert_field;

  struct StepResult {
    Vector next;
    Scalar reward;
    bool terminal;
  };

  Vector reset() const { return start; }
  StepResult step(const Vector& state, const Vector& action) const;
  /// Scripted near-optimal controller, used as the dataset behavior expert.
  Vector expert_action(const Vector& state) const;
  bool at_goal(const Vector& state) const;
  Vector clip_action(const Vector& action) const;
};

using Env = std::variant<TabularMDP, ContinuousEnv>;

TabularMDP make_chain(int n, Scalar gamma);
TabularMDP make_gridworld(int width, int height, Scalar slip, Scalar gamma);
ContinuousEnv make_point_maze(Scalar gamma, const std::vector<WallBox>& walls);
ContinuousEnv make_bandit_chain(Scalar gamma);

/// Default point-maze layout: one horizontal wall forcing a detour.
std::vector<WallBox> default_maze_walls();

/// Family is one of chain | gridworld | point-maze | open-maze | bandit-chain.
/// Recognized params: n, width, height, slip, gamma, horizon, walls.
Env make_env(const std::string& family,
             const std::map<std::string, std::string>& params);

std::string env_id(const Env& env);
Scalar env_gamma(const Env& env);
int env_horizon(const Env& env);

/// Network feature dimensions: tabular states/actions are one-hot encoded.
int feature_state_dim(const Env& env);
int feature_action_dim(const Env& env);

}  // namespace floq
