// SPDX-License-Identifier: Apache-2.0
#include "floq/flow_critic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace floq {

FlowCriticConfig make_flow_critic_config(Scalar q_min, Scalar q_max,
                                         Scalar kappa, int num_bins,
                                         Scalar sigma, int fourier_dim) {
  require(q_max > q_min, "value range must be non-degenerate");
  require(kappa > 0.0 && kappa <= 1.0, "kappa must lie in (0, 1]");
  const Scalar range = q_max - q_min;
  FlowCriticConfig cfg;
  cfg.q_min = q_min;
  cfg.q_max = q_max;
  cfg.noise_high = q_max;  // u = Q_max
  cfg.noise_low = q_max - kappa * range;
  cfg.hl_gauss = make_hl_gauss(num_bins, q_min - 0.05 * range,
                               q_max + 0.05 * range, sigma);
  cfg.fourier = make_fourier_embedding(fourier_dim);
  validate(cfg);
  return cfg;
}

void validate(const FlowCriticConfig& cfg) {
  require(cfg.K >= 1, "K must be at least 1");
  require(cfg.m >= 1, "m must be at least 1");
  require(cfg.K_distill >= 1, "K_distill must be at least 1");
  require(cfg.noise_low <= cfg.noise_high, "noise interval must have l <= u");
  require(cfg.noise_high <= cfg.q_max + 1e-12, "u must not exceed Q_max");
  require(cfg.noise_high - cfg.noise_low <= cfg.q_max - cfg.q_min + 1e-12,
          "noise interval wider than the value range");
  require(cfg.gamma > 0.0 && cfg.gamma < 1.0, "gamma must lie in (0, 1)");
  require(cfg.tau > 0.0 && cfg.tau <= 1.0, "tau must lie in (0, 1]");
}

VelocityField make_velocity_field(int sa_dim, const std::vector<int>& hidden,
                                  const FlowCriticConfig& cfg, RngStream& rng) {
  std::vector<int> sizes;
  sizes.push_back(sa_dim + cfg.interpolant_dim() + cfg.time_dim());
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  DenseNetwork net = make_network(sizes, rng);
  EmaTracker target = make_ema(net, cfg.tau);
  return VelocityField{std::move(net), std::move(target)};
}

MonolithicCritic make_monolithic_critic(int sa_dim,
                                        const std::vector<int>& hidden,
                                        Scalar tau, RngStream& rng) {
  std::vector<int> sizes;
  sizes.push_back(sa_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  DenseNetwork net = make_network(sizes, rng);
  EmaTracker target = make_ema(net, tau);
  return MonolithicCritic{std::move(net), std::move(target)};
}

CriticEnsemble make_critic_ensemble(int n, int sa_dim,
                                    const std::vector<int>& hidden, Scalar tau,
                                    RngStream& rng) {
  require(n >= 1, "ensemble needs at least one member");
  CriticEnsemble ens;
  for (int i = 0; i < n; ++i)
    ens.members.push_back(make_monolithic_critic(sa_dim, hidden, tau, rng));
  return ens;
}

Matrix assemble_velocity_inputs(const FlowCriticConfig& cfg, const Matrix& sa,
                                const RowVector& z, const RowVector& t) {
  const Eigen::Index b = sa.cols();
  require(z.size() == b, "assemble: z column count mismatch");
  require(t.size() == b || t.size() == 1, "assemble: t column count mismatch");
  const int zdim = cfg.interpolant_dim();
  const int tdim = cfg.time_dim();
  Matrix x(sa.rows() + zdim + tdim, b);
  x.topRows(sa.rows()) = sa;

  Scalar* base = x.data();
  const Eigen::Index stride = x.rows();
  const Eigen::Index zoff = sa.rows();
  for (Eigen::Index c = 0; c < b; ++c) {
    Scalar* zslot = base + c * stride + zoff;
    switch (cfg.interpolant_embed) {
      case InterpolantEmbed::HlGauss:
        encode_interpolant_into(cfg.hl_gauss, z[c], zslot);
        break;
      case InterpolantEmbed::Scalar:
        zslot[0] = z[c];
        break;
      case InterpolantEmbed::NormalizedScalar:
        zslot[0] = encode_normalized_scalar(cfg.hl_gauss, z[c]);
        break;
    }
  }

  const Eigen::Index toff = zoff + zdim;
  if (t.size() == 1) {
    // constant time across the batch: embed once and broadcast
    Vector emb(tdim);
    if (cfg.time_embed == TimeEmbed::Fourier)
      embed_time_into(cfg.fourier, t[0], emb.data());
    else
      emb[0] = t[0];
    for (Eigen::Index c = 0; c < b; ++c)
      Eigen::Map<Vector>(base + c * stride + toff, tdim) = emb;
  } else {
    for (Eigen::Index c = 0; c < b; ++c) {
      Scalar* slot = base + c * stride + toff;
      if (cfg.time_embed == TimeEmbed::Fourier)
        embed_time_into(cfg.fourier, t[c], slot);
      else
        slot[0] = t[c];
    }
  }
  return x;
}

RowVector velocity_batch(const DenseNetwork& vnet, const FlowCriticConfig& cfg,
                         const Matrix& sa, const RowVector& z,
                         const RowVector& t) {
  const Matrix x = assemble_velocity_inputs(cfg, sa, z, t);
  return forward(vnet, x).row(0);
}

Scalar velocity_value(const DenseNetwork& vnet, const FlowCriticConfig& cfg,
                      const Vector& s, const Vector& a, Scalar z, Scalar t) {
  Matrix sa(s.size() + a.size(), 1);
  sa.col(0) << s, a;
  RowVector zr(1), tr(1);
  zr[0] = z;
  tr[0] = t;
  return velocity_batch(vnet, cfg, sa, zr, tr)[0];
}

IntegrationResult integrate_dynamics(
    const std::function<Scalar(Scalar t, Scalar z)>& velocity, Scalar z0,
    int K) {
  require(K >= 1, "K must be at least 1");
  check_finite(z0, "integration start");
  IntegrationResult res;
  res.trajectory.reserve(K + 1);
  res.trajectory.push_back(z0);
  Scalar z = z0;
  const Scalar h = 1.0 / K;
  for (int i = 0; i < K; ++i) {
    const Scalar t = static_cast<Scalar>(i) / K;
    z += h * velocity(t, z);
    if (!std::isfinite(z))
      throw NumericalError("integration diverged at step " + std::to_string(i) +
                           " (t=" + std::to_string(t) +
                           ", z_prev=" + std::to_string(res.trajectory.back()) +
                           ")");
    res.trajectory.push_back(z);
  }
  res.final_value = z;
  return res;
}

IntegrationResult integrate(const VelocityField& field, const Vector& s,
                            const Vector& a, Scalar z0, int K, bool use_target,
                            const FlowCriticConfig& cfg) {
  const DenseNetwork& vnet = use_target ? field.target.shadow : field.net;
  return integrate_dynamics(
      [&](Scalar t, Scalar z) { return velocity_value(vnet, cfg, s, a, z, t); },
      z0, K);
}

RowVector integrate_batch(const DenseNetwork& vnet, const FlowCriticConfig& cfg,
                          const Matrix& sa, RowVector z0, int K) {
  require(K >= 1, "K must be at least 1");
  const Scalar h = 1.0 / K;
  RowVector t(1);
  for (int i = 0; i < K; ++i) {
    t[0] = static_cast<Scalar>(i) / K;
    const RowVector v = velocity_batch(vnet, cfg, sa, z0, t);
    z0 += h * v;
    if (!z0.allFinite())
      throw NumericalError("batched integration diverged at step " +
                           std::to_string(i));
  }
  return z0;
}

Vector bootstrap_targets(std::span<const VelocityField> fields,
                         const FlowCriticConfig& cfg, const Batch& batch,
                         const Matrix& next_actions, int K, RngStream& noise) {
  require(!fields.empty(), "bootstrap needs at least one field");
  require(!cfg.clipped_double_q || fields.size() >= 2,
          "clipped double Q needs two fields");
  const Eigen::Index b = batch.size();
  require(next_actions.cols() == b, "next action count mismatch");

  // draw order fixed up front: z'_{j}(transition) for j = 0..m-1
  RowVector draws(b * cfg.m);
  noise.fill_uniform(draws, cfg.noise_low, cfg.noise_high);

  Matrix sa(batch.next_states.rows() + next_actions.rows(), b * cfg.m);
  Matrix sa_once(batch.next_states.rows() + next_actions.rows(), b);
  sa_once << batch.next_states, next_actions;
  for (int j = 0; j < cfg.m; ++j) sa.middleCols(j * b, b) = sa_once;

  const std::size_t active = cfg.clipped_double_q ? 2 : 1;
  Vector averaged = Vector::Zero(b);
  for (std::size_t f = 0; f < active; ++f) {
    const RowVector zK =
        integrate_batch(fields[f].target.shadow, cfg, sa, draws, K);
    // column-major reshape: column j holds draw block j
    const Vector mean_q =
        Eigen::Map<const Matrix>(zK.data(), b, cfg.m).rowwise().mean();
    if (f == 0)
      averaged = mean_q;
    else
      averaged = averaged.cwiseMin(mean_q);
  }

  Vector y(b);
  for (Eigen::Index i = 0; i < b; ++i)
    y[i] = batch.terminal[i] ? batch.rewards[i]
                             : batch.rewards[i] + cfg.gamma * averaged[i];
  check_finite(y, "bootstrap targets");
  return y;
}

LossResult floq_loss(const VelocityField& field, const FlowCriticConfig& cfg,
                     const Batch& batch, const Vector& targets,
                     const RowVector& z0, const RowVector& t) {
  const Eigen::Index b = batch.size();
  require(targets.size() == b && z0.size() == b && t.size() == b,
          "floq_loss: draw count mismatch");
  Matrix sa(batch.states.rows() + batch.actions.rows(), b);
  sa << batch.states, batch.actions;

  // interpolant z(t) = (1 - t) z + t y
  RowVector zt(b);
  for (Eigen::Index i = 0; i < b; ++i)
    zt[i] = (1.0 - t[i]) * z0[i] + t[i] * targets[i];

  const Matrix x = assemble_velocity_inputs(cfg, sa, zt, t);
  ForwardCache cache;
  const Matrix v = forward_cached(field.net, x, cache);

  RowVector residual(b);
  for (Eigen::Index i = 0; i < b; ++i)
    residual[i] = v(0, i) - (targets[i] - z0[i]);

  LossResult res;
  res.loss = residual.squaredNorm() / static_cast<Scalar>(b);
  check_finite(res.loss, "floq loss");
  const Matrix output_grad = 2.0 * residual / static_cast<Scalar>(b);
  res.grads = backward(field.net, cache, output_grad).grads;
  return res;
}

LossResult floq_loss(const VelocityField& field, const FlowCriticConfig& cfg,
                     const Batch& batch, const Vector& targets,
                     RngStream& z_stream, RngStream& t_stream) {
  const Eigen::Index b = batch.size();
  RowVector z0(b), t(b);
  z_stream.fill_uniform(z0, cfg.noise_low, cfg.noise_high);
  t_stream.fill_uniform(t, 0.0, 1.0);
  return floq_loss(field, cfg, batch, targets, z0, t);
}

LossResult t0_only_loss(const VelocityField& field, const FlowCriticConfig& cfg,
                        const Batch& batch, const Vector& targets,
                        RngStream& z_stream) {
  const Eigen::Index b = batch.size();
  RowVector z0(b);
  z_stream.fill_uniform(z0, cfg.noise_low, cfg.noise_high);
  return floq_loss(field, cfg, batch, targets, z0, RowVector::Zero(b));
}

LossResult monolithic_td_loss(const MonolithicCritic& critic,
                              const Batch& batch, const Vector& targets) {
  const Eigen::Index b = batch.size();
  require(targets.size() == b, "monolithic_td_loss: target count mismatch");
  Matrix sa(batch.states.rows() + batch.actions.rows(), b);
  sa << batch.states, batch.actions;
  ForwardCache cache;
  const Matrix q = forward_cached(critic.net, sa, cache);
  const RowVector residual = q.row(0) - targets.transpose();
  LossResult res;
  res.loss = residual.squaredNorm() / static_cast<Scalar>(b);
  check_finite(res.loss, "TD loss");
  const Matrix output_grad = 2.0 * residual / static_cast<Scalar>(b);
  res.grads = backward(critic.net, cache, output_grad).grads;
  return res;
}

RowVector q_value_batch(const DenseNetwork& vnet, const FlowCriticConfig& cfg,
                        const Matrix& sa, int num_noise, int K,
                        RngStream& noise) {
  require(num_noise >= 1, "num_noise must be positive");
  const Eigen::Index b = sa.cols();
  RowVector draws(b * num_noise);
  noise.fill_uniform(draws, cfg.noise_low, cfg.noise_high);
  Matrix rep(sa.rows(), b * num_noise);
  for (int j = 0; j < num_noise; ++j) rep.middleCols(j * b, b) = sa;
  const RowVector zK = integrate_batch(vnet, cfg, rep, draws, K);
  return Eigen::Map<const Matrix>(zK.data(), b, num_noise)
      .rowwise()
      .mean()
      .transpose();
}

Scalar q_value(const VelocityField& field, const FlowCriticConfig& cfg,
               const Vector& s, const Vector& a, int num_noise,
               RngStream& noise, bool use_target) {
  Matrix sa(s.size() + a.size(), 1);
  sa.col(0) << s, a;
  const DenseNetwork& vnet = use_target ? field.target.shadow : field.net;
  return q_value_batch(vnet, cfg, sa, num_noise, cfg.K, noise)[0];
}

Scalar curvature(const VelocityField& field, const FlowCriticConfig& cfg,
                 const Vector& s, const Vector& a, int grid, int num_noise,
                 RngStream& noise) {
  require(grid >= 2, "curvature grid must have at least 2 points");
  require(num_noise >= 1, "num_noise must be positive");
  std::vector<Scalar> draws(num_noise);
  for (auto& d : draws) d = noise.uniform(cfg.noise_low, cfg.noise_high);

  const Scalar h = 1.0 / grid;
  Scalar total = 0.0;
  for (int n = 0; n < num_noise; ++n) {
    Scalar z = draws[n];
    Scalar prev_v = 0.0;
    Scalar acc = 0.0;
    for (int i = 0; i < grid; ++i) {
      const Scalar t = static_cast<Scalar>(i) / grid;
      const Scalar v = velocity_value(field.net, cfg, s, a, z, t);
      if (i > 0) acc += std::abs(v - prev_v) / h;
      prev_v = v;
      z += h * v;
    }
    total += acc / (grid - 1);
  }
  return total / num_noise;
}

Vector advantage_deviation(const VelocityField& field,
                           const FlowCriticConfig& cfg, const Vector& s,
                           const Vector& a, Scalar z0) {
  const IntegrationResult traj =
      integrate(field, s, a, z0, cfg.K, /*use_target=*/false, cfg);
  const Scalar zK = traj.final_value;
  Vector d(cfg.K);
  for (int k = 1; k <= cfg.K; ++k) {
    const Scalar straight =
        z0 + (static_cast<Scalar>(k) / cfg.K) * (zK - z0);
    d[k - 1] = traj.trajectory[k] - straight;
  }
  return d;
}

const char* to_string(InterpolantEmbed embed) {
  switch (embed) {
    case InterpolantEmbed::HlGauss: return "hl-gauss";
    case InterpolantEmbed::Scalar: return "scalar";
    case InterpolantEmbed::NormalizedScalar: return "normalized-scalar";
  }
  return "?";
}

const char* to_string(TimeEmbed embed) {
  return embed == TimeEmbed::Fourier ? "fourier" : "scalar";
}

InterpolantEmbed interpolant_embed_from_string(const std::string& text) {
  if (text == "hl-gauss") return InterpolantEmbed::HlGauss;
  if (text == "scalar") return InterpolantEmbed::Scalar;
  if (text == "normalized-scalar") return InterpolantEmbed::NormalizedScalar;
  throw ConfigError("unknown interpolant embedding: " + text);
}

TimeEmbed time_embed_from_string(const std::string& text) {
  if (text == "fourier") return TimeEmbed::Fourier;
  if (text == "scalar") return TimeEmbed::Scalar;
  throw ConfigError("unknown time embedding: " + text);
}

void save_critic_config(const FlowCriticConfig& cfg,
                        const std::filesystem::path& json_path) {
  nlohmann::ordered_json j;
  j["format"] = "FLOQCRITIC1";
  j["K"] = cfg.K;
  j["m"] = cfg.m;
  j["noise_low"] = cfg.noise_low;
  j["noise_high"] = cfg.noise_high;
  j["gamma"] = cfg.gamma;
  j["tau"] = cfg.tau;
  j["q_min"] = cfg.q_min;
  j["q_max"] = cfg.q_max;
  j["clipped_double_q"] = cfg.clipped_double_q;
  j["K_distill"] = cfg.K_distill;
  j["interpolant_embed"] = to_string(cfg.interpolant_embed);
  j["num_bins"] = cfg.hl_gauss.num_bins;
  j["support_low"] = cfg.hl_gauss.v_min;
  j["support_high"] = cfg.hl_gauss.v_max;
  j["sigma"] = cfg.hl_gauss.sigma;
  j["time_embed"] = to_string(cfg.time_embed);
  j["fourier_dim"] = cfg.fourier.dimension;
  std::ofstream out(json_path);
  if (!out)
    throw ConfigError("cannot open critic sidecar for writing: " +
                      json_path.string());
  out << j.dump(2) << '\n';
}

FlowCriticConfig load_critic_config(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ConfigError("cannot open critic sidecar: " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed critic sidecar " + json_path.string() + ": " +
                      e.what());
  }
  if (j.value("format", "") != std::string("FLOQCRITIC1"))
    throw ConfigError("critic sidecar " + json_path.string() +
                      " has wrong format tag");
  FlowCriticConfig cfg;
  try {
    cfg.K = j.at("K").get<int>();
    cfg.m = j.at("m").get<int>();
    cfg.noise_low = j.at("noise_low").get<Scalar>();
    cfg.noise_high = j.at("noise_high").get<Scalar>();
    cfg.gamma = j.at("gamma").get<Scalar>();
    cfg.tau = j.at("tau").get<Scalar>();
    cfg.q_min = j.at("q_min").get<Scalar>();
    cfg.q_max = j.at("q_max").get<Scalar>();
    cfg.clipped_double_q = j.at("clipped_double_q").get<bool>();
    cfg.K_distill = j.at("K_distill").get<int>();
    cfg.interpolant_embed =
        interpolant_embed_from_string(j.at("interpolant_embed").get<std::string>());
    cfg.hl_gauss = make_hl_gauss(
        j.at("num_bins").get<int>(), j.at("support_low").get<Scalar>(),
        j.at("support_high").get<Scalar>(), j.at("sigma").get<Scalar>());
    cfg.time_embed = time_embed_from_string(j.at("time_embed").get<std::string>());
    cfg.fourier = make_fourier_embedding(j.at("fourier_dim").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("critic sidecar " + json_path.string() +
                      " missing fields: " + e.what());
  }
  validate(cfg);
  return cfg;
}

}  // namespace floq
