// SPDX-License-Identifier: Apache-2.0
#include "floq/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "floq/oracles.hpp"

namespace floq {

BehaviorSpec parse_behavior(const std::string& text) {
  auto call = [&](const std::string& name) -> std::pair<bool, Scalar> {
    if (text.rfind(name + "(", 0) == 0 && text.back() == ')') {
      const std::string arg =
          text.substr(name.size() + 1, text.size() - name.size() - 2);
      try {
        return {true, std::stod(arg)};
      } catch (const std::exception&) {
        throw ConfigError("bad behavior parameter: " + text);
      }
    }
    return {false, 0.0};
  };
  if (text == "random") return {BehaviorSpec::Kind::Random, 0.0};
  if (auto [ok, v] = call("eps-greedy"); ok)
    return {BehaviorSpec::Kind::EpsGreedyOptimal, v};
  if (auto [ok, v] = call("mixture"); ok) return {BehaviorSpec::Kind::Mixture, v};
  throw ConfigError("unknown behavior spec: " + text);
}

std::string behavior_id(const BehaviorSpec& behavior) {
  char buf[64];
  switch (behavior.kind) {
    case BehaviorSpec::Kind::Random:
      return "random";
    case BehaviorSpec::Kind::EpsGreedyOptimal:
      std::snprintf(buf, sizeof(buf), "eps-greedy(%g)", behavior.param);
      return buf;
    case BehaviorSpec::Kind::Mixture:
      std::snprintf(buf, sizeof(buf), "mixture(%g)", behavior.param);
      return buf;
  }
  return "unknown";
}

namespace {

Vector scalar_vec(Scalar v) {
  Vector out(1);
  out[0] = v;
  return out;
}

OfflineDataset generate_tabular(const TabularMDP& mdp,
                                const BehaviorSpec& behavior,
                                std::int64_t num_transitions,
                                std::uint64_t seed) {
  const QTable optimal = value_iteration(mdp, 1e-10);
  RngStream action_rng(seed, "data.behavior");
  RngStream env_rng(seed, "data.env");

  auto behavior_action = [&](int s) -> int {
    switch (behavior.kind) {
      case BehaviorSpec::Kind::Random:
        return static_cast<int>(action_rng.uniform_below(mdp.num_actions));
      case BehaviorSpec::Kind::EpsGreedyOptimal:
        if (action_rng.uniform() < behavior.param)
          return static_cast<int>(action_rng.uniform_below(mdp.num_actions));
        return optimal.greedy_action(s);
      case BehaviorSpec::Kind::Mixture:
        if (action_rng.uniform() < behavior.param)
          return optimal.greedy_action(s);
        return static_cast<int>(action_rng.uniform_below(mdp.num_actions));
    }
    return 0;
  };

  OfflineDataset ds;
  ds.transitions.reserve(num_transitions);
  int s = sample_state(mdp.initial, env_rng);
  int steps_in_episode = 0;
  while (static_cast<std::int64_t>(ds.transitions.size()) < num_transitions) {
    const int a = behavior_action(s);
    const int ns = sample_state(mdp.transition[a].row(s).transpose(), env_rng);
    const Scalar r = mdp.reward(s, a);
    const bool term = mdp.terminal[ns] != 0;
    ++steps_in_episode;
    const bool truncate = !term && steps_in_episode >= mdp.horizon;
    ds.transitions.push_back(Transition{scalar_vec(s), scalar_vec(a), r,
                                        scalar_vec(ns), term});
    if (term || truncate) {
      s = sample_state(mdp.initial, env_rng);
      steps_in_episode = 0;
    } else {
      s = ns;
    }
  }
  return ds;
}

OfflineDataset generate_continuous(const ContinuousEnv& env,
                                   const BehaviorSpec& behavior,
                                   std::int64_t num_transitions,
                                   std::uint64_t seed) {
  RngStream action_rng(seed, "data.behavior");

  auto random_action = [&]() {
    Vector a(env.action_dim);
    for (int i = 0; i < env.action_dim; ++i)
      a[i] = action_rng.uniform(env.action_low[i], env.action_high[i]);
    return a;
  };
  auto behavior_action = [&](const Vector& s) -> Vector {
    switch (behavior.kind) {
      case BehaviorSpec::Kind::Random:
        return random_action();
      case BehaviorSpec::Kind::EpsGreedyOptimal:
        if (action_rng.uniform() < behavior.param) return random_action();
        return env.expert_action(s);
      case BehaviorSpec::Kind::Mixture:
        if (action_rng.uniform() < behavior.param) return env.expert_action(s);
        return random_action();
    }
    return random_action();
  };

  OfflineDataset ds;
  ds.transitions.reserve(num_transitions);
  Vector s = env.reset();
  int steps_in_episode = 0;
  while (static_cast<std::int64_t>(ds.transitions.size()) < num_transitions) {
    const Vector a = behavior_action(s);
    const auto step = env.step(s, a);
    ++steps_in_episode;
    const bool truncate = !step.terminal && steps_in_episode >= env.horizon;
    ds.transitions.push_back(Transition{s, a, step.reward, step.next,
                                        step.terminal});
    if (step.terminal || truncate) {
      s = env.reset();
      steps_in_episode = 0;
    } else {
      s = step.next;
    }
  }
  return ds;
}

}  // namespace

OfflineDataset generate_dataset(const Env& env, const BehaviorSpec& behavior,
                                std::int64_t num_transitions,
                                std::uint64_t seed) {
  require(num_transitions >= 0, "num_transitions must be non-negative");
  OfflineDataset ds;
  if (const auto* tab = std::get_if<TabularMDP>(&env)) {
    ds = generate_tabular(*tab, behavior, num_transitions, seed);
    ds.meta.state_dim = 1;
    ds.meta.action_dim = 1;
  } else {
    const auto& cont = std::get<ContinuousEnv>(env);
    ds = generate_continuous(cont, behavior, num_transitions, seed);
    ds.meta.state_dim = cont.state_dim;
    ds.meta.action_dim = cont.action_dim;
  }
  ds.meta.env = env_id(env);
  ds.meta.behavior = behavior_id(behavior);
  ds.meta.seed = seed;
  ds.meta.gamma = env_gamma(env);
  ds.meta.num_transitions = static_cast<std::int64_t>(ds.transitions.size());
  Scalar rmin = 0.0, rmax = 0.0;
  if (!ds.transitions.empty()) {
    rmin = rmax = ds.transitions.front().reward;
    for (const Transition& t : ds.transitions) {
      rmin = std::min(rmin, t.reward);
      rmax = std::max(rmax, t.reward);
    }
  }
  ds.meta.reward_min = rmin;
  ds.meta.reward_max = rmax;
  return ds;
}

namespace {

std::string fmt17(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open dataset file for writing: " +
                              path.string());
  nlohmann::ordered_json meta;
  meta["env"] = ds.meta.env;
  meta["behavior"] = ds.meta.behavior;
  meta["seed"] = ds.meta.seed;
  meta["gamma"] = ds.meta.gamma;
  meta["state_dim"] = ds.meta.state_dim;
  meta["action_dim"] = ds.meta.action_dim;
  meta["reward_min"] = ds.meta.reward_min;
  meta["reward_max"] = ds.meta.reward_max;
  meta["num_transitions"] = ds.meta.num_transitions;
  out << "# FLOQDATA1 " << meta.dump() << '\n';
  for (int i = 0; i < ds.meta.state_dim; ++i) out << 's' << i << ',';
  for (int i = 0; i < ds.meta.action_dim; ++i) out << 'a' << i << ',';
  out << "r,";
  for (int i = 0; i < ds.meta.state_dim; ++i) out << "ns" << i << ',';
  out << "terminal\n";
  for (const Transition& t : ds.transitions) {
    for (int i = 0; i < ds.meta.state_dim; ++i) out << fmt17(t.state[i]) << ',';
    for (int i = 0; i < ds.meta.action_dim; ++i)
      out << fmt17(t.action[i]) << ',';
    out << fmt17(t.reward) << ',';
    for (int i = 0; i < ds.meta.state_dim; ++i)
      out << fmt17(t.next_state[i]) << ',';
    out << (t.terminal ? '1' : '0') << '\n';
  }
  if (!out) throw ConfigError("dataset write failed: " + path.string());
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# FLOQDATA1 ", 0) != 0)
    throw ConfigError("dataset " + path.string() +
                      ": line 1 is not a \"# FLOQDATA1\" metadata line");
  OfflineDataset ds;
  try {
    const auto meta = nlohmann::json::parse(line.substr(12));
    ds.meta.env = meta.at("env").get<std::string>();
    ds.meta.behavior = meta.at("behavior").get<std::string>();
    ds.meta.seed = meta.at("seed").get<std::uint64_t>();
    ds.meta.gamma = meta.at("gamma").get<Scalar>();
    ds.meta.state_dim = meta.at("state_dim").get<int>();
    ds.meta.action_dim = meta.at("action_dim").get<int>();
    ds.meta.reward_min = meta.at("reward_min").get<Scalar>();
    ds.meta.reward_max = meta.at("reward_max").get<Scalar>();
    ds.meta.num_transitions = meta.at("num_transitions").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset " + path.string() +
                      ": line 1 metadata is malformed: " + e.what());
  }
  if (ds.meta.state_dim <= 0 || ds.meta.action_dim <= 0)
    throw ConfigError("dataset " + path.string() + ": non-positive dimensions");

  std::string expected_header;
  for (int i = 0; i < ds.meta.state_dim; ++i)
    expected_header += 's' + std::to_string(i) + ',';
  for (int i = 0; i < ds.meta.action_dim; ++i)
    expected_header += 'a' + std::to_string(i) + ',';
  expected_header += "r,";
  for (int i = 0; i < ds.meta.state_dim; ++i)
    expected_header += "ns" + std::to_string(i) + ',';
  expected_header += "terminal";
  if (!std::getline(in, line) || line != expected_header)
    throw ConfigError("dataset " + path.string() +
                      ": line 2 header row mismatch: \"" + line + "\"");

  const int fields = 2 * ds.meta.state_dim + ds.meta.action_dim + 2;
  std::int64_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::vector<Scalar> vals;
    vals.reserve(fields);
    const char* p = line.c_str();
    char* end = nullptr;
    for (int f = 0; f < fields; ++f) {
      const Scalar v = std::strtod(p, &end);
      if (end == p)
        throw ConfigError("dataset " + path.string() + ": bad value in row " +
                          std::to_string(row));
      vals.push_back(v);
      p = end;
      if (f + 1 < fields) {
        if (*p != ',')
          throw ConfigError("dataset " + path.string() +
                            ": wrong field count in row " + std::to_string(row));
        ++p;
      }
    }
    if (*p != '\0')
      throw ConfigError("dataset " + path.string() + ": trailing data in row " +
                        std::to_string(row));
    Transition t;
    int k = 0;
    t.state = Vector(ds.meta.state_dim);
    for (int i = 0; i < ds.meta.state_dim; ++i) t.state[i] = vals[k++];
    t.action = Vector(ds.meta.action_dim);
    for (int i = 0; i < ds.meta.action_dim; ++i) t.action[i] = vals[k++];
    t.reward = vals[k++];
    t.next_state = Vector(ds.meta.state_dim);
    for (int i = 0; i < ds.meta.state_dim; ++i) t.next_state[i] = vals[k++];
    t.terminal = vals[k] != 0.0;
    ds.transitions.push_back(std::move(t));
  }
  if (static_cast<std::int64_t>(ds.transitions.size()) !=
      ds.meta.num_transitions)
    throw ConfigError("dataset " + path.string() + ": truncated file, " +
                      std::to_string(ds.transitions.size()) + " rows but " +
                      std::to_string(ds.meta.num_transitions) + " declared");
  return ds;
}

}  // namespace floq
