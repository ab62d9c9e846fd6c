// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "floq/common.hpp"
#include "floq/envs.hpp"

namespace floq {

struct DatasetMeta {
  std::string env;
  std::string behavior;
  std::uint64_t seed = 0;
  Scalar gamma = 0.99;
  int state_dim = 0;
  int action_dim = 0;
  Scalar reward_min = 0.0;
  Scalar reward_max = 0.0;
  std::int64_t num_transitions = 0;
};

/// Transitions are stored in the environment's native representation:
/// tabular states/actions are single indices; one-hot expansion happens when
/// samples are fed to networks.
struct OfflineDataset {
  DatasetMeta meta;
  std::vector<Transition> transitions;
};

struct BehaviorSpec {
  enum class Kind { EpsGreedyOptimal, Random, Mixture };
  Kind kind = Kind::Mixture;
  Scalar param = 0.5;  // epsilon for eps-greedy, expert fraction for mixture
};

/// Parses "random", "eps-greedy(0.1)" or "mixture(0.5)".
BehaviorSpec parse_behavior(const std::string& text);
std::string behavior_id(const BehaviorSpec& behavior);

/// Rolls out the behavior policy until exactly num_transitions records exist.
/// Episodes that hit the horizon are truncated and flagged non-terminal.
/// Deterministic given (env, behavior, seed).
OfflineDataset generate_dataset(const Env& env, const BehaviorSpec& behavior,
                                std::int64_t num_transitions,
                                std::uint64_t seed);

// CSV format: one metadata line "# FLOQDATA1 <json>", a header row
// "s0..,a0..,r,ns0..,terminal", then one row per transition with floats
// printed at 17 significant digits (bit-exact round trip).
void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

}  // namespace floq
