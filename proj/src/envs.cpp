// SPDX-License-Identifier: Apache-2.0
#include "floq/envs.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace floq {

void validate(const TabularMDP& mdp) {
  require(mdp.num_states > 0 && mdp.num_actions > 0, "MDP must be non-empty");
  require(mdp.gamma >= 0.0 && mdp.gamma < 1.0,
          "discount must lie in [0, 1)");
  require(static_cast<int>(mdp.transition.size()) == mdp.num_actions,
          "one transition matrix per action");
  for (int a = 0; a < mdp.num_actions; ++a) {
    const Matrix& p = mdp.transition[a];
    require(p.rows() == mdp.num_states && p.cols() == mdp.num_states,
            "transition matrix shape mismatch");
    for (int s = 0; s < mdp.num_states; ++s) {
      const Scalar row_sum = p.row(s).sum();
      if (std::abs(row_sum - 1.0) > 1e-12)
        throw std::invalid_argument("transition row does not sum to 1");
      if (p.row(s).minCoeff() < 0.0)
        throw std::invalid_argument("negative transition probability");
      if (mdp.terminal[s]) {
        if (p(s, s) != 1.0 || mdp.reward(s, a) != 0.0)
          throw std::invalid_argument(
              "terminal states must self-loop with reward 0");
      }
    }
  }
  if (std::abs(mdp.initial.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("initial distribution does not sum to 1");
}

int sample_state(const Vector& distribution, RngStream& rng) {
  const Scalar u = rng.uniform();
  Scalar acc = 0.0;
  for (Eigen::Index s = 0; s < distribution.size(); ++s) {
    acc += distribution[s];
    if (u < acc) return static_cast<int>(s);
  }
  return static_cast<int>(distribution.size() - 1);
}

TabularMDP make_chain(int n, Scalar gamma) {
  require(n >= 2, "chain needs at least 2 states");
  TabularMDP mdp;
  mdp.num_states = n;
  mdp.num_actions = 2;  // 0 = left, 1 = right
  mdp.gamma = gamma;
  mdp.family = "chain";
  mdp.goal_state = n - 1;
  mdp.horizon = 50;
  mdp.reward = Matrix::Zero(n, 2);
  mdp.terminal.assign(n, 0);
  mdp.terminal[n - 1] = 1;
  mdp.transition.assign(2, Matrix::Zero(n, n));
  for (int s = 0; s < n; ++s) {
    if (mdp.terminal[s]) {
      mdp.transition[0](s, s) = 1.0;
      mdp.transition[1](s, s) = 1.0;
      continue;
    }
    const int left = std::max(s - 1, 0);
    const int right = s + 1;
    mdp.transition[0](s, left) = 1.0;
    mdp.transition[1](s, right) = 1.0;
    // reward 1 on entering the goal
    if (right == mdp.goal_state) mdp.reward(s, 1) = 1.0;
    if (left == mdp.goal_state) mdp.reward(s, 0) = 1.0;
  }
  mdp.initial = Vector::Zero(n);
  mdp.initial[0] = 1.0;
  validate(mdp);
  return mdp;
}

TabularMDP make_gridworld(int width, int height, Scalar slip, Scalar gamma) {
  require(width >= 2 && height >= 2, "gridworld needs at least 2x2 cells");
  require(slip >= 0.0 && slip < 1.0, "slip probability must lie in [0, 1)");
  const int n = width * height;
  TabularMDP mdp;
  mdp.num_states = n;
  mdp.num_actions = 4;  // up, down, left, right
  mdp.gamma = gamma;
  mdp.family = "gridworld";
  mdp.goal_state = n - 1;
  mdp.horizon = 200;
  mdp.reward = Matrix::Zero(n, 4);
  mdp.terminal.assign(n, 0);
  mdp.terminal[mdp.goal_state] = 1;
  mdp.transition.assign(4, Matrix::Zero(n, n));

  const int dx[4] = {0, 0, -1, 1};
  const int dy[4] = {-1, 1, 0, 0};
  auto cell = [&](int x, int y) { return y * width + x; };
  auto move = [&](int s, int dir) {
    const int x = s % width, y = s / width;
    const int nx = std::clamp(x + dx[dir], 0, width - 1);
    const int ny = std::clamp(y + dy[dir], 0, height - 1);
    return cell(nx, ny);
  };

  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < 4; ++a) {
      if (mdp.terminal[s]) {
        mdp.transition[a](s, s) = 1.0;
        continue;
      }
      // with probability slip the executed direction is uniform over all four
      for (int dir = 0; dir < 4; ++dir) {
        Scalar p = slip / 4.0;
        if (dir == a) p += 1.0 - slip;
        mdp.transition[a](s, move(s, dir)) += p;
      }
      // step penalty -1, except 0 when the commanded move enters the goal;
      // rewards depend on (s, a) only, matching the tabular reward model
      Scalar r = -1.0;
      if (move(s, a) == mdp.goal_state) r = 0.0;
      mdp.reward(s, a) = r;
    }
  }
  mdp.initial = Vector::Zero(n);
  mdp.initial[0] = 1.0;
  validate(mdp);
  return mdp;
}

namespace {

bool segment_blocked(const std::vector<WallBox>& walls, const Vector& from,
                     const Vector& to) {
  // sample the segment densely; walls are fat boxes, so this is robust enough
  for (int i = 1; i <= 8; ++i) {
    const Scalar u = static_cast<Scalar>(i) / 8.0;
    const Scalar x = from[0] + u * (to[0] - from[0]);
    const Scalar y = from[1] + u * (to[1] - from[1]);
    for (const WallBox& w : walls)
      if (w.contains(x, y)) return true;
  }
  return false;
}

}  // namespace

ContinuousEnv::StepResult ContinuousEnv::step(const Vector& state,
                                              const Vector& action) const {
  require(state.size() == state_dim && action.size() == action_dim,
          "env step: dimension mismatch");
  const Vector a = clip_action(action);
  StepResult res;
  if (family == "point-maze") {
    Vector next = state;
    // move per axis so walls slide instead of sticking
    for (int axis = 0; axis < 2; ++axis) {
      Vector trial = next;
      trial[axis] = std::clamp(next[axis] + step_scale * a[axis], 0.0, 1.0);
      if (!segment_blocked(walls, next, trial)) next = trial;
    }
    res.next = next;
    res.terminal = at_goal(next);
    res.reward = res.terminal ? 0.0 : -1.0;
  } else if (family == "bandit-chain") {
    Vector next(1);
    next[0] = std::clamp(state[0] + chain_step * a[0], 0.0, 1.0);
    res.next = next;
    res.terminal = at_goal(next);
    res.reward = res.terminal ? 0.0 : -1.0;
  } else {
    throw std::invalid_argument("unknown continuous family: " + family);
  }
  return res;
}

bool ContinuousEnv::at_goal(const Vector& state) const {
  if (family == "point-maze") return (state - goal).norm() <= goal_radius;
  return state[0] >= chain_goal;
}

Vector ContinuousEnv::clip_action(const Vector& action) const {
  return action.cwiseMax(action_low).cwiseMin(action_high);
}

namespace {

constexpr int kGridRes = 41;

std::vector<Scalar> bfs_field(const ContinuousEnv& env) {
  std::vector<Scalar> d(kGridRes * kGridRes, 1e9);
  auto blocked = [&](int ix, int iy) {
    const Scalar x = static_cast<Scalar>(ix) / (kGridRes - 1);
    const Scalar y = static_cast<Scalar>(iy) / (kGridRes - 1);
    for (const WallBox& w : env.walls)
      if (w.contains(x, y)) return true;
    return false;
  };
  std::queue<std::pair<int, int>> q;
  for (int iy = 0; iy < kGridRes; ++iy)
    for (int ix = 0; ix < kGridRes; ++ix) {
      const Scalar x = static_cast<Scalar>(ix) / (kGridRes - 1);
      const Scalar y = static_cast<Scalar>(iy) / (kGridRes - 1);
      const Scalar dist = std::hypot(x - env.goal[0], y - env.goal[1]);
      if (dist <= env.goal_radius && !blocked(ix, iy)) {
        d[iy * kGridRes + ix] = 0.0;
        q.emplace(ix, iy);
      }
    }
  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};
  while (!q.empty()) {
    auto [ix, iy] = q.front();
    q.pop();
    for (int k = 0; k < 4; ++k) {
      const int nx = ix + dx[k], ny = iy + dy[k];
      if (nx < 0 || ny < 0 || nx >= kGridRes || ny >= kGridRes) continue;
      if (blocked(nx, ny)) continue;
      if (d[ny * kGridRes + nx] > d[iy * kGridRes + ix] + 1.0) {
        d[ny * kGridRes + nx] = d[iy * kGridRes + ix] + 1.0;
        q.emplace(nx, ny);
      }
    }
  }
  return d;
}

}  // namespace

Vector ContinuousEnv::expert_action(const Vector& state) const {
  if (family == "bandit-chain") {
    Vector a(1);
    a[0] = std::clamp((0.95 - state[0]) / chain_step, -1.0, 1.0);
    return a;
  }
  if (walls.empty()) {
    // open arena: head straight for the goal, landing exactly when close
    Vector delta = goal - state;
    const Scalar dist = delta.norm();
    if (dist < 1e-12) return Vector::Zero(2);
    Vector a = delta / dist;
    if (dist < step_scale) a *= dist / step_scale;
    return clip_action(a);
  }
  require(!expert_field.empty(), "maze expert field missing");
  // steepest descent over the bilinear distance field
  auto sample = [&](Scalar x, Scalar y) {
    x = std::clamp(x, 0.0, 1.0) * (kGridRes - 1);
    y = std::clamp(y, 0.0, 1.0) * (kGridRes - 1);
    const int ix = std::min(static_cast<int>(x), kGridRes - 2);
    const int iy = std::min(static_cast<int>(y), kGridRes - 2);
    const Scalar fx = x - ix, fy = y - iy;
    auto at = [&](int i, int j) { return expert_field[j * kGridRes + i]; };
    return (1 - fx) * (1 - fy) * at(ix, iy) + fx * (1 - fy) * at(ix + 1, iy) +
           (1 - fx) * fy * at(ix, iy + 1) + fx * fy * at(ix + 1, iy + 1);
  };
  const Scalar h = 0.5 * step_scale;
  Vector g(2);
  g[0] = sample(state[0] + h, state[1]) - sample(state[0] - h, state[1]);
  g[1] = sample(state[0], state[1] + h) - sample(state[0], state[1] - h);
  const Scalar norm = g.norm();
  if (norm < 1e-9) {
    Vector delta = goal - state;
    const Scalar dist = delta.norm();
    return dist < 1e-12 ? Vector::Zero(2) : clip_action(Vector(delta / dist));
  }
  return clip_action(Vector(-g / norm * 1.0));
}

ContinuousEnv make_point_maze(Scalar gamma, const std::vector<WallBox>& walls) {
  ContinuousEnv env;
  env.family = "point-maze";
  env.state_dim = 2;
  env.action_dim = 2;
  env.action_low = Vector::Constant(2, -1.0);
  env.action_high = Vector::Constant(2, 1.0);
  env.start = Vector(2);
  env.start << 0.1, 0.1;
  env.goal = Vector(2);
  env.goal << 0.9, 0.9;
  env.goal_radius = 0.1;
  env.step_scale = 0.08;
  env.horizon = 60;
  env.gamma = gamma;
  env.walls = walls;
  if (!walls.empty()) env.expert_field = bfs_field(env);
  return env;
}

ContinuousEnv make_bandit_chain(Scalar gamma) {
  ContinuousEnv env;
  env.family = "bandit-chain";
  env.state_dim = 1;
  env.action_dim = 1;
  env.action_low = Vector::Constant(1, -1.0);
  env.action_high = Vector::Constant(1, 1.0);
  env.start = Vector::Zero(1);
  env.horizon = 25;
  env.gamma = gamma;
  return env;
}

std::vector<WallBox> default_maze_walls() {
  // wall across most of the arena; the detour goes around the right side
  return {WallBox{0.0, 0.45, 0.65, 0.55}};
}

namespace {

Scalar param_or(const std::map<std::string, std::string>& params,
                const std::string& key, Scalar fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for env param " + key + ": " +
                      it->second);
  }
}

std::vector<WallBox> parse_walls(const std::string& text) {
  std::vector<WallBox> walls;
  std::istringstream ss(text);
  std::string box;
  while (std::getline(ss, box, ';')) {
    if (box.empty()) continue;
    std::istringstream bs(box);
    std::string tok;
    std::vector<Scalar> vals;
    while (std::getline(bs, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != 4)
      throw ConfigError("wall box needs 4 coordinates: " + box);
    walls.push_back(WallBox{vals[0], vals[1], vals[2], vals[3]});
  }
  return walls;
}

}  // namespace

Env make_env(const std::string& family,
             const std::map<std::string, std::string>& params) {
  const Scalar gamma = param_or(params, "gamma", 0.99);
  if (family == "chain") {
    const int n = static_cast<int>(param_or(params, "n", 3));
    return make_chain(n, gamma);
  }
  if (family == "gridworld") {
    const int w = static_cast<int>(param_or(params, "width", 5));
    const int h = static_cast<int>(param_or(params, "height", 5));
    const Scalar slip = param_or(params, "slip", 0.1);
    return make_gridworld(w, h, slip, gamma);
  }
  if (family == "point-maze" || family == "open-maze") {
    std::vector<WallBox> walls =
        family == "open-maze" ? std::vector<WallBox>{} : default_maze_walls();
    auto it = params.find("walls");
    if (it != params.end()) walls = parse_walls(it->second);
    ContinuousEnv env = make_point_maze(gamma, walls);
    env.horizon = static_cast<int>(param_or(params, "horizon", env.horizon));
    return env;
  }
  if (family == "bandit-chain") {
    ContinuousEnv env = make_bandit_chain(gamma);
    env.horizon = static_cast<int>(param_or(params, "horizon", env.horizon));
    return env;
  }
  throw ConfigError("unknown environment family: " + family);
}

std::string env_id(const Env& env) {
  if (const auto* tab = std::get_if<TabularMDP>(&env)) {
    std::ostringstream ss;
    ss << tab->family << "-" << tab->num_states;
    return ss.str();
  }
  return std::get<ContinuousEnv>(env).family;
}

Scalar env_gamma(const Env& env) {
  if (const auto* tab = std::get_if<TabularMDP>(&env)) return tab->gamma;
  return std::get<ContinuousEnv>(env).gamma;
}

int env_horizon(const Env& env) {
  if (const auto* tab = std::get_if<TabularMDP>(&env)) return tab->horizon;
  return std::get<ContinuousEnv>(env).horizon;
}

int feature_state_dim(const Env& env) {
  if (const auto* tab = std::get_if<TabularMDP>(&env)) return tab->num_states;
  return std::get<ContinuousEnv>(env).state_dim;
}

int feature_action_dim(const Env& env) {
  if (const auto* tab = std::get_if<TabularMDP>(&env)) return tab->num_actions;
  return std::get<ContinuousEnv>(env).action_dim;
}

}  // namespace floq
