// SPDX-License-Identifier: Apache-2.0
#include "floq/policy.hpp"

#include <cmath>

namespace floq {

namespace {

Matrix clip_columns(Matrix a, const Vector& lo, const Vector& hi) {
  for (Eigen::Index c = 0; c < a.cols(); ++c)
    a.col(c) = a.col(c).cwiseMax(lo).cwiseMin(hi);
  return a;
}

/// rows [states; x; time-embed(t)], with per-column or broadcast t.
Matrix assemble_actor_inputs(const FourierTimeEmbedding& emb,
                             const Matrix& states, const Matrix& x,
                             const RowVector& t) {
  const Eigen::Index b = states.cols();
  const int tdim = emb.dimension;
  Matrix input(states.rows() + x.rows(), b);
  input << states, x;
  Matrix full(input.rows() + tdim, b);
  full.topRows(input.rows()) = input;
  Scalar* base = full.data();
  const Eigen::Index stride = full.rows();
  const Eigen::Index toff = input.rows();
  if (t.size() == 1) {
    Vector e(tdim);
    embed_time_into(emb, t[0], e.data());
    for (Eigen::Index c = 0; c < b; ++c)
      Eigen::Map<Vector>(base + c * stride + toff, tdim) = e;
  } else {
    for (Eigen::Index c = 0; c < b; ++c)
      embed_time_into(emb, t[c], base + c * stride + toff);
  }
  return full;
}

}  // namespace

BcFlowPolicy make_bc_flow_policy(int state_dim, const Vector& action_low,
                                 const Vector& action_high,
                                 const std::vector<int>& hidden, int flow_steps,
                                 int fourier_dim, RngStream& rng) {
  require(flow_steps >= 1, "actor flow steps must be positive");
  const int da = static_cast<int>(action_low.size());
  BcFlowPolicy p;
  p.flow_steps = flow_steps;
  p.time_embed = make_fourier_embedding(fourier_dim);
  p.action_low = action_low;
  p.action_high = action_high;
  std::vector<int> sizes;
  sizes.push_back(state_dim + da + fourier_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(da);
  p.net = make_network(sizes, rng);
  return p;
}

OneStepPolicy make_one_step_policy(int state_dim, const Vector& action_low,
                                   const Vector& action_high,
                                   const std::vector<int>& hidden,
                                   RngStream& rng) {
  const int da = static_cast<int>(action_low.size());
  OneStepPolicy p;
  p.action_low = action_low;
  p.action_high = action_high;
  std::vector<int> sizes;
  sizes.push_back(state_dim + da);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(da);
  p.net = make_network(sizes, rng);
  return p;
}

DistilledCritic make_distilled_critic(int sa_dim, const std::vector<int>& hidden,
                                      RngStream& rng) {
  return DistilledCritic{make_monolithic_critic(sa_dim, hidden, 1.0, rng)};
}

LossResult bc_flow_loss(const BcFlowPolicy& policy, const Batch& batch,
                        const Matrix& x0, const RowVector& t) {
  const Eigen::Index b = batch.size();
  require(x0.cols() == b && t.size() == b, "bc_flow_loss: draw count mismatch");
  // x(1) = a, x(t) = (1-t) x(0) + t x(1); target displacement x(1) - x(0)
  Matrix xt(x0.rows(), b);
  Matrix target(x0.rows(), b);
  for (Eigen::Index c = 0; c < b; ++c) {
    xt.col(c) = (1.0 - t[c]) * x0.col(c) + t[c] * batch.actions.col(c);
    target.col(c) = batch.actions.col(c) - x0.col(c);
  }
  const Matrix input = assemble_actor_inputs(policy.time_embed, batch.states,
                                             xt, t);
  ForwardCache cache;
  const Matrix w = forward_cached(policy.net, input, cache);
  const Matrix residual = w - target;
  LossResult res;
  res.loss = residual.squaredNorm() / static_cast<Scalar>(b);
  check_finite(res.loss, "BC flow loss");
  const Matrix output_grad = 2.0 * residual / static_cast<Scalar>(b);
  res.grads = backward(policy.net, cache, output_grad).grads;
  return res;
}

LossResult bc_flow_loss(const BcFlowPolicy& policy, const Batch& batch,
                        RngStream& noise, RngStream& t_stream) {
  const Eigen::Index b = batch.size();
  Matrix x0(batch.actions.rows(), b);
  noise.fill_normal(x0);
  RowVector t(b);
  t_stream.fill_uniform(t, 0.0, 1.0);
  return bc_flow_loss(policy, batch, x0, t);
}

Matrix bc_flow_actions(const BcFlowPolicy& policy, const Matrix& states,
                       const Matrix& x0, bool clip) {
  const int M = policy.flow_steps;
  Matrix x = x0;
  RowVector t(1);
  for (int i = 0; i < M; ++i) {
    t[0] = static_cast<Scalar>(i) / M;
    const Matrix input = assemble_actor_inputs(policy.time_embed, states, x, t);
    x += forward(policy.net, input) / static_cast<Scalar>(M);
  }
  check_finite(x, "BC flow action");
  return clip ? clip_columns(std::move(x), policy.action_low, policy.action_high)
              : x;
}

Vector sample_bc_action(const BcFlowPolicy& policy, const Vector& state,
                        RngStream& noise) {
  Matrix x0(policy.action_low.size(), 1);
  noise.fill_normal(x0);
  return bc_flow_actions(policy, Matrix(state), x0, /*clip=*/true).col(0);
}

LossResult distill_loss(const DistilledCritic& distill,
                        const VelocityField& field, const FlowCriticConfig& cfg,
                        const Batch& batch, int num_noise, RngStream& noise) {
  require(num_noise >= 1, "distill needs at least one noise draw");
  const Eigen::Index b = batch.size();
  Matrix sa(batch.states.rows() + batch.actions.rows(), b);
  sa << batch.states, batch.actions;

  // flow side: per-draw K_distill-step integrals, constants w.r.t. the
  // distill parameters
  RowVector draws(b * num_noise);
  noise.fill_uniform(draws, cfg.noise_low, cfg.noise_high);
  Matrix rep(sa.rows(), b * num_noise);
  for (int j = 0; j < num_noise; ++j) rep.middleCols(j * b, b) = sa;
  const RowVector flow_q =
      integrate_batch(field.net, cfg, rep, draws, cfg.K_distill);
  const Matrix flow_per_draw = Eigen::Map<const Matrix>(flow_q.data(), b,
                                                        num_noise);

  ForwardCache cache;
  const Matrix q = forward_cached(distill.body.net, sa, cache);

  // mean over batch and draws of (Q_distill - flow sample)^2; the per-sample
  // residuals carry the irreducible variance over z(0)
  LossResult res;
  RowVector mean_residual = RowVector::Zero(b);
  for (int j = 0; j < num_noise; ++j) {
    const RowVector r = q.row(0) - flow_per_draw.col(j).transpose();
    res.loss += r.squaredNorm();
    mean_residual += r;
  }
  const Scalar count = static_cast<Scalar>(b) * num_noise;
  res.loss /= count;
  check_finite(res.loss, "distill loss");
  const Matrix output_grad = 2.0 * mean_residual / count;
  res.grads = backward(distill.body.net, cache, output_grad).grads;
  return res;
}

CriticEval distilled_critic_eval(const DistilledCritic& distill) {
  return [&distill](const Matrix& states, const Matrix& actions,
                    Matrix* dq_da) -> RowVector {
    Matrix sa(states.rows() + actions.rows(), states.cols());
    sa << states, actions;
    ForwardCache cache;
    const Matrix q = forward_cached(distill.body.net, sa, cache);
    if (dq_da) {
      const Matrix ones = Matrix::Ones(1, sa.cols());
      const BackwardResult back = backward(distill.body.net, cache, ones);
      *dq_da = back.input_grad.bottomRows(actions.rows());
    }
    return q.row(0);
  };
}

Matrix one_step_actions(const OneStepPolicy& policy, const Matrix& states,
                        const Matrix& x, bool clip) {
  Matrix input(states.rows() + x.rows(), states.cols());
  input << states, x;
  Matrix a = forward(policy.net, input);
  return clip ? clip_columns(std::move(a), policy.action_low, policy.action_high)
              : a;
}

Vector sample_one_step_action(const OneStepPolicy& policy, const Vector& state,
                              RngStream& noise) {
  Matrix x(policy.action_low.size(), 1);
  noise.fill_normal(x);
  return one_step_actions(policy, Matrix(state), x, /*clip=*/true).col(0);
}

LossResult one_step_policy_loss_core(const OneStepPolicy& policy,
                                     const Matrix& states, const Matrix& x,
                                     const Matrix& bc_actions,
                                     const CriticEval& critic, Scalar alpha) {
  require(alpha >= 0.0, "alpha must be non-negative");
  const Eigen::Index b = states.cols();
  Matrix input(states.rows() + x.rows(), b);
  input << states, x;
  ForwardCache cache;
  const Matrix a_pi = forward_cached(policy.net, input, cache);  // unclipped

  Matrix dq_da;
  const RowVector q = critic(states, a_pi, &dq_da);

  const Matrix diff = a_pi - bc_actions;
  LossResult res;
  res.loss = (-q.sum() + alpha * diff.squaredNorm()) / static_cast<Scalar>(b);
  check_finite(res.loss, "one-step policy loss");

  // dL/da_pi = (-dQ/da + 2 alpha (a_pi - a_bc)) / b
  const Matrix output_grad =
      (-dq_da + 2.0 * alpha * diff) / static_cast<Scalar>(b);
  res.grads = backward(policy.net, cache, output_grad).grads;
  return res;
}

LossResult one_step_policy_loss(const OneStepPolicy& policy,
                                const BcFlowPolicy& bc,
                                const DistilledCritic& distill,
                                const Batch& batch, Scalar alpha,
                                RngStream& noise) {
  const Eigen::Index b = batch.size();
  // one shared noise draw per sample, used for both a_pi and the BC target
  Matrix x(batch.actions.rows(), b);
  noise.fill_normal(x);
  const Matrix bc_actions = bc_flow_actions(bc, batch.states, x, /*clip=*/false);
  return one_step_policy_loss_core(policy, batch.states, x, bc_actions,
                                   distilled_critic_eval(distill), alpha);
}

}  // namespace floq
