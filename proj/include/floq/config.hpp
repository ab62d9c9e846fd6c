// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "floq/common.hpp"
#include "floq/flow_critic.hpp"

namespace floq {

using KeyValues = std::map<std::string, std::string>;

/// Flat "key = value" lines with '#' comments; dotted keys for nesting.
KeyValues parse_config_file(const std::filesystem::path& path);
/// Parses one "key=value" token (CLI override form).
std::pair<std::string, std::string> parse_override(const std::string& text);

enum class CriticType { Floq, T0Only, Monolithic, Ensemble };
const char* to_string(CriticType type);

enum class SigmaMode { Fraction, Absolute };
enum class TargetActionSource { OneStep, BcFlow };

/// Full experiment description. Defaults follow the reference hyperparameter
/// set: lr 3e-4, batch 256, tau 0.005, gamma 0.99, K 8, m 8, kappa 0.1,
/// Fourier dim 64, actor flow steps 10.
struct ExperimentConfig {
  // environment
  std::string env_family = "chain";
  KeyValues env_params;  // n / width / height / slip / horizon / walls
  Scalar gamma = 0.99;

  // dataset
  std::string dataset_path;  // empty = generate
  std::string behavior = "mixture(0.5)";
  std::int64_t dataset_size = 20000;
  std::uint64_t dataset_seed = 0;

  // critic
  CriticType critic_type = CriticType::Floq;
  int K = 8;
  int m = 8;
  Scalar kappa = 0.1;
  int K_distill = 8;
  bool clipped_double_q = false;
  int ensemble_n = 1;
  std::vector<int> critic_hidden = {512, 512, 512, 512};
  int num_bins = 65;
  SigmaMode sigma_mode = SigmaMode::Fraction;
  Scalar sigma = 0.2;
  InterpolantEmbed interpolant_embed = InterpolantEmbed::HlGauss;
  TimeEmbed time_embed = TimeEmbed::Fourier;
  int fourier_dim = 64;
  bool q_range_override = false;
  Scalar q_min_override = 0.0;
  Scalar q_max_override = 0.0;
  TargetActionSource target_action = TargetActionSource::OneStep;
  Scalar tau = 0.005;

  // actor stack (continuous tasks)
  int actor_flow_steps = 10;
  Scalar alpha = 1.0;
  std::vector<int> actor_hidden = {512, 512, 512, 512};

  // optimization
  Scalar lr = 3e-4;
  int batch_size = 256;
  long gradient_steps = 20000;
  long eval_interval = 1000;
  int eval_episodes = 50;
  std::uint64_t seed = 0;

  // online fine-tuning
  Scalar exploration_noise = 0.1;  // fraction of the action range

  /// Canonical key/value form of every field, stable order.
  KeyValues to_key_values() const;
  std::string dump() const;
};

/// Builds a config from parsed keys; unknown keys are rejected.
ExperimentConfig experiment_from(const KeyValues& kv);
ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides);

std::vector<int> parse_int_list(const std::string& text);

}  // namespace floq
