// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "floq/config.hpp"
#include "floq/dataset.hpp"
#include "floq/envs.hpp"
#include "floq/flow_critic.hpp"
#include "floq/oracles.hpp"
#include "floq/policy.hpp"

namespace floq {

struct MetricsRow {
  long step = 0;
  Scalar critic_loss = 0.0;
  Scalar mean_q = 0.0;
  Scalar oracle_gap = 0.0;   // tabular runs only; 0 otherwise
  Scalar curvature = 0.0;    // flow critics only; 0 otherwise
  Scalar policy_score = 0.0; // average undiscounted return over eval episodes
  Scalar distill_loss = 0.0;
  Scalar online_return = 0.0;  // online fine-tuning only; 0 otherwise
};

struct TrainingMetrics {
  std::vector<MetricsRow> rows;
};

// CSV schema, fixed and versioned: "# FLOQMETRICS1" line, a header row, then
// one row per eval step with floats at 17 significant digits.
void save_metrics_csv(const TrainingMetrics& metrics,
                      const std::filesystem::path& path);

/// How env states/actions map onto network features (tabular -> one-hot).
struct FeatureSpec {
  bool tabular = false;
  int num_states = 0;
  int num_actions = 0;
  int state_dim = 0;
  int action_dim = 0;
  Vector action_low;
  Vector action_high;
};
FeatureSpec feature_spec(const Env& env);

/// Expands raw dataset transitions into network feature space.
Batch gather_batch(const OfflineDataset& data, const FeatureSpec& feat,
                   const std::vector<std::int64_t>& indices);

/// Everything trained by one experiment.
struct Agent {
  ExperimentConfig exp;
  FlowCriticConfig critic_cfg;
  FeatureSpec feat;

  std::vector<VelocityField> fields;  // 1, or 2 with clipped double Q
  std::vector<AdamState> field_adams;

  CriticEnsemble ensemble;  // monolithic baseline(s)
  std::vector<AdamState> ensemble_adams;

  bool has_policy = false;  // continuous-action stack present
  BcFlowPolicy bc;
  AdamState bc_adam;
  OneStepPolicy one_step;
  AdamState one_step_adam;
  DistilledCritic distill;
  AdamState distill_adam;

  bool is_flow() const {
    return exp.critic_type == CriticType::Floq ||
           exp.critic_type == CriticType::T0Only;
  }
  /// t0-only variant integrates with a single flow step everywhere.
  int eval_steps() const {
    return exp.critic_type == CriticType::T0Only ? 1 : critic_cfg.K;
  }
};

/// Builds env + dataset described by the config (generating the dataset when
/// no path is given).
Env build_env(const ExperimentConfig& cfg);
OfflineDataset build_dataset(const ExperimentConfig& cfg, const Env& env);

Agent make_agent(const ExperimentConfig& cfg, const Env& env,
                 const DatasetMeta& meta);

struct TrainOutput {
  Agent agent;
  TrainingMetrics metrics;
};

/// Offline training with the update order: critic, distill, BC flow policy,
/// one-step policy, EMA. `trace`, when set, records one tag per loss/EMA
/// evaluation for order-conformance checks.
TrainOutput train_offline(const ExperimentConfig& cfg, const Env& env,
                          const OfflineDataset& data,
                          std::vector<std::string>* trace = nullptr);

/// Online fine-tuning: the replay buffer starts as the offline dataset and
/// grows in place by exactly one transition per gradient step (1:1 ratio).
TrainingMetrics finetune_online(Agent& agent, const Env& env,
                                OfflineDataset& buffer, long online_steps);

struct EvalResult {
  Scalar mean_return = 0.0;
  Scalar success_rate = 0.0;
  Scalar std_error = 0.0;
};
EvalResult evaluate(const Agent& agent, const Env& env, int episodes,
                    std::uint64_t seed);

// --- ablation driver --------------------------------------------------------

/// Axes: K, kappa, sigma, ensemble, t0-only, interpolant-embed, time-embed,
/// distill-steps.
ExperimentConfig apply_axis(const ExperimentConfig& base,
                            const std::string& axis, const std::string& value);

struct AblationRun {
  std::string axis;
  std::string value;
  std::uint64_t seed = 0;
  TrainingMetrics metrics;
};
struct AblationResult {
  std::vector<AblationRun> runs;
};
AblationResult ablate(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values,
                      const std::vector<std::uint64_t>& seeds);
/// Tidy long-format CSV: axis,value,seed,step,<metric columns>.
void save_ablation_csv(const AblationResult& result,
                       const std::filesystem::path& path);

// --- checkpoints -------------------------------------------------------------

void save_agent(const Agent& agent, const std::filesystem::path& dir);
Agent load_agent(const std::filesystem::path& dir);

/// Deployed Q estimate for a feature-space state-action pair.
Scalar agent_q_value(const Agent& agent, const Vector& s, const Vector& a,
                     RngStream& noise);

/// Tabular Q estimates for all (state, action) pairs.
Matrix tabular_q_table(const Agent& agent, RngStream& noise);

/// Sup-norm gap against the oracle over non-terminal states. Terminal states
/// never occur as transition sources, so no TD method constrains them.
Scalar oracle_sup_gap(const Agent& agent, const TabularMDP& mdp,
                      const QTable& oracle, RngStream& noise);

}  // namespace floq
