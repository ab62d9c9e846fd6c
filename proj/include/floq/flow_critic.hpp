// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "floq/common.hpp"
#include "floq/encodings.hpp"
#include "floq/nn.hpp"
#include "floq/rng.hpp"

namespace floq {

enum class InterpolantEmbed { HlGauss, Scalar, NormalizedScalar };
enum class TimeEmbed { Fourier, Scalar };

/// Everything the critic flow needs to turn (s, a, z, t) into a velocity and
/// noise into a Q-value.
struct FlowCriticConfig {
  int K = 8;                  // integration steps
  int m = 8;                  // target noise samples
  Scalar noise_low = 0.0;     // l
  Scalar noise_high = 0.0;    // u
  Scalar gamma = 0.99;
  Scalar tau = 0.005;
  Scalar q_min = 0.0;
  Scalar q_max = 0.0;
  bool clipped_double_q = false;
  int K_distill = 8;
  InterpolantEmbed interpolant_embed = InterpolantEmbed::HlGauss;
  HlGaussEncoding hl_gauss;
  TimeEmbed time_embed = TimeEmbed::Fourier;
  FourierTimeEmbedding fourier;

  Scalar kappa() const {
    return (noise_high - noise_low) / (q_max - q_min);
  }
  int interpolant_dim() const {
    return interpolant_embed == InterpolantEmbed::HlGauss ? hl_gauss.num_bins
                                                          : 1;
  }
  int time_dim() const {
    return time_embed == TimeEmbed::Fourier ? fourier.dimension : 1;
  }
};

/// Builds the derived pieces from a value range: u = q_max, l = u - kappa*R,
/// HL-Gauss support widened by 5% of R on each side.
FlowCriticConfig make_flow_critic_config(Scalar q_min, Scalar q_max,
                                         Scalar kappa, int num_bins,
                                         Scalar sigma, int fourier_dim);
void validate(const FlowCriticConfig& cfg);

/// Velocity network v(t, z | s, a) plus its EMA target copy.
struct VelocityField {
  DenseNetwork net;
  EmaTracker target;
};
VelocityField make_velocity_field(int sa_dim, const std::vector<int>& hidden,
                                  const FlowCriticConfig& cfg, RngStream& rng);

/// Plain feed-forward critic (s, a) -> Q, with its own EMA target.
struct MonolithicCritic {
  DenseNetwork net;
  EmaTracker target;
};
MonolithicCritic make_monolithic_critic(int sa_dim,
                                        const std::vector<int>& hidden,
                                        Scalar tau, RngStream& rng);

/// Members share the TD target; the prediction is the arithmetic mean.
struct CriticEnsemble {
  std::vector<MonolithicCritic> members;
};
CriticEnsemble make_critic_ensemble(int n, int sa_dim,
                                    const std::vector<int>& hidden, Scalar tau,
                                    RngStream& rng);

// --- velocity evaluation -------------------------------------------------

/// Input assembly: rows are [state-action features; interpolant embed;
/// time embed]. `t_per_column` may be a single value broadcast to all columns.
Matrix assemble_velocity_inputs(const FlowCriticConfig& cfg, const Matrix& sa,
                                const RowVector& z, const RowVector& t);

RowVector velocity_batch(const DenseNetwork& vnet, const FlowCriticConfig& cfg,
                         const Matrix& sa, const RowVector& z,
                         const RowVector& t);
Scalar velocity_value(const DenseNetwork& vnet, const FlowCriticConfig& cfg,
                      const Vector& s, const Vector& a, Scalar z, Scalar t);

// --- integration ----------------------------------------------------------

struct IntegrationResult {
  Scalar final_value = 0.0;
  std::vector<Scalar> trajectory;  // z(0) .. z(K)
};

/// Left-endpoint Euler: z(i+1) = z(i) + (1/K) v(i/K, z(i) | s, a).
IntegrationResult integrate(const VelocityField& field, const Vector& s,
                            const Vector& a, Scalar z0, int K, bool use_target,
                            const FlowCriticConfig& cfg);

/// Same scheme over arbitrary scalar dynamics; shared by tests and oracles.
IntegrationResult integrate_dynamics(
    const std::function<Scalar(Scalar t, Scalar z)>& velocity, Scalar z0,
    int K);

/// Batched integration over columns of `sa` with per-column starts `z0`.
RowVector integrate_batch(const DenseNetwork& vnet, const FlowCriticConfig& cfg,
                          const Matrix& sa, RowVector z0, int K);

// --- TD machinery ---------------------------------------------------------

/// Bootstrapped TD-target y = r + gamma * (1/m) sum_j psi(1, z'_j | s', a').
/// Terminal transitions return y = r exactly. With clipped double Q (two
/// fields) the minimum of the two m-averaged integrals is used. The m draws
/// in `noise` are consumed in a fixed order before any integration runs.
Vector bootstrap_targets(std::span<const VelocityField> fields,
                         const FlowCriticConfig& cfg, const Batch& batch,
                         const Matrix& next_actions, int K, RngStream& noise);

struct LossResult {
  Scalar loss = 0.0;
  NetGrads grads;
};

/// Flow-matching TD loss with pre-drawn per-transition noise and times:
/// mean over the batch of (v(t, (1-t) z + t y | s, a) - (y - z))^2.
/// Targets are constants; gradients cover the online field only.
LossResult floq_loss(const VelocityField& field, const FlowCriticConfig& cfg,
                     const Batch& batch, const Vector& targets,
                     const RowVector& z0, const RowVector& t);
/// Drawing variant: one (z, t) draw per transition from the given streams.
LossResult floq_loss(const VelocityField& field, const FlowCriticConfig& cfg,
                     const Batch& batch, const Vector& targets,
                     RngStream& z_stream, RngStream& t_stream);

/// Ablation variant: t fixed to 0, so the interpolant equals the noise draw.
LossResult t0_only_loss(const VelocityField& field, const FlowCriticConfig& cfg,
                        const Batch& batch, const Vector& targets,
                        RngStream& z_stream);

/// Mean squared TD error for a monolithic critic.
LossResult monolithic_td_loss(const MonolithicCritic& critic,
                              const Batch& batch, const Vector& targets);

/// Q estimate deployed at evaluation time: the mean of num_noise fresh
/// integrations from Unif[l, u].
Scalar q_value(const VelocityField& field, const FlowCriticConfig& cfg,
               const Vector& s, const Vector& a, int num_noise,
               RngStream& noise, bool use_target = false);

/// Batched q_value over state-action columns (shared noise draws).
RowVector q_value_batch(const DenseNetwork& vnet, const FlowCriticConfig& cfg,
                        const Matrix& sa, int num_noise, int K,
                        RngStream& noise);

/// Mean |dv/dt| along Euler trajectories, finite-differenced on a grid of
/// `grid` time points and averaged over num_noise starts.
Scalar curvature(const VelocityField& field, const FlowCriticConfig& cfg,
                 const Vector& s, const Vector& a, int grid, int num_noise,
                 RngStream& noise);

/// Gap between the partial integral and the straight line from z(0) to z(K):
/// d_k = psi(k/K) - [z(0) + (k/K)(psi(1) - z(0))], k = 1..K. d_K == 0.
Vector advantage_deviation(const VelocityField& field,
                           const FlowCriticConfig& cfg, const Vector& s,
                           const Vector& a, Scalar z0);

// --- checkpointing ----------------------------------------------------------

/// Critic checkpoint: nn-core file plus a JSON config sidecar with stable key
/// order at <prefix>.json.
void save_critic_config(const FlowCriticConfig& cfg,
                        const std::filesystem::path& json_path);
FlowCriticConfig load_critic_config(const std::filesystem::path& json_path);

const char* to_string(InterpolantEmbed embed);
const char* to_string(TimeEmbed embed);
InterpolantEmbed interpolant_embed_from_string(const std::string& text);
TimeEmbed time_embed_from_string(const std::string& text);

}  // namespace floq
