// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "floq/common.hpp"
#include "floq/flow_critic.hpp"
#include "floq/nn.hpp"
#include "floq/rng.hpp"

namespace floq {

/// Behavior-cloning flow policy w(t, x | s): action-space velocity field
/// integrated with flow_steps Euler steps from x(0) ~ N(0, I).
struct BcFlowPolicy {
  DenseNetwork net;
  int flow_steps = 10;
  FourierTimeEmbedding time_embed;
  Vector action_low;
  Vector action_high;
};
BcFlowPolicy make_bc_flow_policy(int state_dim, const Vector& action_low,
                                 const Vector& action_high,
                                 const std::vector<int>& hidden, int flow_steps,
                                 int fourier_dim, RngStream& rng);

/// Direct noise-conditioned policy mu(s, x).
struct OneStepPolicy {
  DenseNetwork net;
  Vector action_low;
  Vector action_high;
};
OneStepPolicy make_one_step_policy(int state_dim, const Vector& action_low,
                                   const Vector& action_high,
                                   const std::vector<int>& hidden,
                                   RngStream& rng);

/// Noise-free critic regressed onto the integrated flow critic.
struct DistilledCritic {
  MonolithicCritic body;
};
DistilledCritic make_distilled_critic(int sa_dim, const std::vector<int>& hidden,
                                      RngStream& rng);

// --- BC flow policy --------------------------------------------------------

/// Flow-matching loss toward dataset actions with pre-drawn noise x0
/// (d_a x B) and per-sample times.
LossResult bc_flow_loss(const BcFlowPolicy& policy, const Batch& batch,
                        const Matrix& x0, const RowVector& t);
LossResult bc_flow_loss(const BcFlowPolicy& policy, const Batch& batch,
                        RngStream& noise, RngStream& t_stream);

/// Batched Euler integration of the action flow from given starts; the result
/// is clipped to the action box when `clip` is set (sampling-time projection).
Matrix bc_flow_actions(const BcFlowPolicy& policy, const Matrix& states,
                       const Matrix& x0, bool clip);
Vector sample_bc_action(const BcFlowPolicy& policy, const Vector& state,
                        RngStream& noise);

// --- distilled critic -------------------------------------------------------

/// Regression of the distilled critic onto K_distill-step integrals of the
/// flow critic; flow values are constants (no gradient into the field).
LossResult distill_loss(const DistilledCritic& distill,
                        const VelocityField& field, const FlowCriticConfig& cfg,
                        const Batch& batch, int num_noise, RngStream& noise);

// --- one-step policy --------------------------------------------------------

/// Critic evaluator used by the one-step policy update: returns Q per column
/// and, when requested, dQ/da (action rows of the input gradient).
using CriticEval = std::function<RowVector(const Matrix& states,
                                           const Matrix& actions,
                                           Matrix* dq_da)>;
CriticEval distilled_critic_eval(const DistilledCritic& distill);

/// Loss E[-Q(s, a_pi) + alpha ||a_pi - a_bc||^2] with a_pi = mu(s, x);
/// gradients flow through a_pi into the one-step network only. `x` is the
/// shared noise used both for a_pi and for the BC target actions.
LossResult one_step_policy_loss_core(const OneStepPolicy& policy,
                                     const Matrix& states, const Matrix& x,
                                     const Matrix& bc_actions,
                                     const CriticEval& critic, Scalar alpha);
LossResult one_step_policy_loss(const OneStepPolicy& policy,
                                const BcFlowPolicy& bc,
                                const DistilledCritic& distill,
                                const Batch& batch, Scalar alpha,
                                RngStream& noise);

/// mu(s, x) per column; clipped to the action box when `clip` is set.
Matrix one_step_actions(const OneStepPolicy& policy, const Matrix& states,
                        const Matrix& x, bool clip);
Vector sample_one_step_action(const OneStepPolicy& policy, const Vector& state,
                              RngStream& noise);

}  // namespace floq
