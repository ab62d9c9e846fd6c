// SPDX-License-Identifier: Apache-2.0
#include "floq/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace floq {

namespace {

std::string fmt17(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Vector one_hot(int index, int dim) {
  Vector v = Vector::Zero(dim);
  v[index] = 1.0;
  return v;
}

constexpr const char* kMetricsHeader =
    "step,critic_loss,mean_q,oracle_gap,curvature,policy_score,distill_loss,"
    "online_return";

}  // namespace

void save_metrics_csv(const TrainingMetrics& metrics,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open metrics file: " + path.string());
  out << "# FLOQMETRICS1\n" << kMetricsHeader << '\n';
  for (const MetricsRow& r : metrics.rows) {
    out << r.step << ',' << fmt17(r.critic_loss) << ',' << fmt17(r.mean_q)
        << ',' << fmt17(r.oracle_gap) << ',' << fmt17(r.curvature) << ','
        << fmt17(r.policy_score) << ',' << fmt17(r.distill_loss) << ','
        << fmt17(r.online_return) << '\n';
  }
}

FeatureSpec feature_spec(const Env& env) {
  FeatureSpec feat;
  if (const auto* tab = std::get_if<TabularMDP>(&env)) {
    feat.tabular = true;
    feat.num_states = tab->num_states;
    feat.num_actions = tab->num_actions;
    feat.state_dim = tab->num_states;
    feat.action_dim = tab->num_actions;
    feat.action_low = Vector::Zero(feat.action_dim);
    feat.action_high = Vector::Ones(feat.action_dim);
  } else {
    const auto& cont = std::get<ContinuousEnv>(env);
    feat.state_dim = cont.state_dim;
    feat.action_dim = cont.action_dim;
    feat.action_low = cont.action_low;
    feat.action_high = cont.action_high;
  }
  return feat;
}

Batch gather_batch(const OfflineDataset& data, const FeatureSpec& feat,
                   const std::vector<std::int64_t>& indices) {
  const Eigen::Index b = static_cast<Eigen::Index>(indices.size());
  Batch batch;
  batch.states.resize(feat.state_dim, b);
  batch.actions.resize(feat.action_dim, b);
  batch.next_states.resize(feat.state_dim, b);
  batch.rewards.resize(b);
  batch.terminal.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Transition& t = data.transitions[indices[i]];
    if (feat.tabular) {
      batch.states.col(i) = one_hot(static_cast<int>(t.state[0]), feat.state_dim);
      batch.actions.col(i) =
          one_hot(static_cast<int>(t.action[0]), feat.action_dim);
      batch.next_states.col(i) =
          one_hot(static_cast<int>(t.next_state[0]), feat.state_dim);
    } else {
      batch.states.col(i) = t.state;
      batch.actions.col(i) = t.action;
      batch.next_states.col(i) = t.next_state;
    }
    batch.rewards[i] = t.reward;
    batch.terminal[i] = t.terminal ? 1 : 0;
  }
  return batch;
}

Env build_env(const ExperimentConfig& cfg) {
  KeyValues params = cfg.env_params;
  params["gamma"] = fmt17(cfg.gamma);
  return make_env(cfg.env_family, params);
}

OfflineDataset build_dataset(const ExperimentConfig& cfg, const Env& env) {
  if (!cfg.dataset_path.empty()) {
    OfflineDataset ds = load_dataset(cfg.dataset_path);
    const FeatureSpec feat = feature_spec(env);
    const int expect_s = feat.tabular ? 1 : feat.state_dim;
    const int expect_a = feat.tabular ? 1 : feat.action_dim;
    if (ds.meta.state_dim != expect_s || ds.meta.action_dim != expect_a)
      throw ConfigError("dataset dimensions do not match env " + env_id(env));
    return ds;
  }
  return generate_dataset(env, parse_behavior(cfg.behavior), cfg.dataset_size,
                          cfg.dataset_seed);
}

namespace {

std::pair<Scalar, Scalar> resolve_q_range(const ExperimentConfig& cfg,
                                          const DatasetMeta& meta) {
  if (cfg.q_range_override) {
    if (cfg.q_max_override <= cfg.q_min_override)
      throw ConfigError("critic.q_max must exceed critic.q_min");
    return {cfg.q_min_override, cfg.q_max_override};
  }
  // Q bounds from dataset reward bounds: r / (1 - gamma)
  const Scalar qmin = meta.reward_min / (1.0 - cfg.gamma);
  const Scalar qmax = meta.reward_max / (1.0 - cfg.gamma);
  if (qmax <= qmin)
    throw ConfigError(
        "dataset reward range is degenerate; set critic.q_min/critic.q_max");
  return {std::min(qmin, qmax), std::max(qmin, qmax)};
}

}  // namespace

Agent make_agent(const ExperimentConfig& cfg, const Env& env,
                 const DatasetMeta& meta) {
  Agent agent;
  agent.exp = cfg;
  agent.feat = feature_spec(env);

  const auto [qmin, qmax] = resolve_q_range(cfg, meta);
  const Scalar range = qmax - qmin;
  const Scalar sigma =
      cfg.sigma_mode == SigmaMode::Fraction ? cfg.sigma * range : cfg.sigma;
  FlowCriticConfig ccfg = make_flow_critic_config(qmin, qmax, cfg.kappa,
                                                  cfg.num_bins, sigma,
                                                  cfg.fourier_dim);
  ccfg.K = cfg.K;
  ccfg.m = cfg.m;
  ccfg.gamma = cfg.gamma;
  ccfg.tau = cfg.tau;
  ccfg.clipped_double_q = cfg.clipped_double_q;
  ccfg.K_distill = cfg.K_distill;
  ccfg.interpolant_embed = cfg.interpolant_embed;
  ccfg.time_embed = cfg.time_embed;
  validate(ccfg);
  agent.critic_cfg = ccfg;

  const int sa_dim = agent.feat.state_dim + agent.feat.action_dim;
  if (agent.is_flow()) {
    const int num_fields = cfg.clipped_double_q ? 2 : 1;
    for (int f = 0; f < num_fields; ++f) {
      RngStream init(cfg.seed, "critic.init." + std::to_string(f));
      agent.fields.push_back(
          make_velocity_field(sa_dim, cfg.critic_hidden, ccfg, init));
      agent.field_adams.push_back(make_adam(agent.fields.back().net, cfg.lr));
    }
  } else {
    const int n = cfg.critic_type == CriticType::Ensemble ? cfg.ensemble_n : 1;
    RngStream init(cfg.seed, "critic.ensemble.init");
    agent.ensemble =
        make_critic_ensemble(n, sa_dim, cfg.critic_hidden, cfg.tau, init);
    for (auto& member : agent.ensemble.members)
      agent.ensemble_adams.push_back(make_adam(member.net, cfg.lr));
  }

  if (!agent.feat.tabular) {
    agent.has_policy = true;
    RngStream bc_init(cfg.seed, "policy.bc.init");
    agent.bc = make_bc_flow_policy(agent.feat.state_dim, agent.feat.action_low,
                                   agent.feat.action_high, cfg.actor_hidden,
                                   cfg.actor_flow_steps, cfg.fourier_dim,
                                   bc_init);
    agent.bc_adam = make_adam(agent.bc.net, cfg.lr);
    RngStream os_init(cfg.seed, "policy.onestep.init");
    agent.one_step = make_one_step_policy(
        agent.feat.state_dim, agent.feat.action_low, agent.feat.action_high,
        cfg.actor_hidden, os_init);
    agent.one_step_adam = make_adam(agent.one_step.net, cfg.lr);
    RngStream di_init(cfg.seed, "policy.distill.init");
    agent.distill = make_distilled_critic(sa_dim, cfg.critic_hidden, di_init);
    agent.distill_adam = make_adam(agent.distill.body.net, cfg.lr);
  }
  return agent;
}

// ---------------------------------------------------------------------------
// training internals
// ---------------------------------------------------------------------------

namespace {

struct Streams {
  RngStream batch;
  RngStream target_noise;
  RngStream greedy_noise;
  std::vector<RngStream> loss_z;
  std::vector<RngStream> loss_t;
  RngStream policy_target;
  RngStream distill_noise;
  RngStream bc_noise;
  RngStream bc_time;
  RngStream onestep_noise;
  RngStream eval;
  RngStream eval_env;

  explicit Streams(std::uint64_t seed)
      : batch(seed, "harness.batch"),
        target_noise(seed, "critic.target.noise"),
        greedy_noise(seed, "critic.greedy.noise"),
        policy_target(seed, "policy.target.noise"),
        distill_noise(seed, "policy.distill.noise"),
        bc_noise(seed, "policy.bc.noise"),
        bc_time(seed, "policy.bc.time"),
        onestep_noise(seed, "policy.onestep.noise"),
        eval(seed, "harness.eval"),
        eval_env(seed, "harness.eval.env") {
    for (int f = 0; f < 2; ++f) {
      loss_z.emplace_back(seed, "critic.loss.z." + std::to_string(f));
      loss_t.emplace_back(seed, "critic.loss.t." + std::to_string(f));
    }
  }
};

/// Mean online-net prediction of the monolithic ensemble.
RowVector ensemble_q(const CriticEnsemble& ensemble, const Matrix& sa,
                     bool use_target) {
  RowVector q = RowVector::Zero(sa.cols());
  for (const MonolithicCritic& member : ensemble.members)
    q += forward(use_target ? member.target.shadow : member.net, sa).row(0);
  return q / static_cast<Scalar>(ensemble.members.size());
}

/// Mean-of-members critic evaluator; stands in for the distilled critic when
/// the baseline has no flow to distill.
CriticEval ensemble_critic_eval(const CriticEnsemble& ensemble) {
  const CriticEnsemble* ens = &ensemble;
  return [ens](const Matrix& states, const Matrix& actions,
               Matrix* dq_da) -> RowVector {
    Matrix sa(states.rows() + actions.rows(), states.cols());
    sa << states, actions;
    RowVector q = RowVector::Zero(sa.cols());
    if (dq_da) *dq_da = Matrix::Zero(actions.rows(), actions.cols());
    for (const MonolithicCritic& member : ens->members) {
      ForwardCache cache;
      q += forward_cached(member.net, sa, cache).row(0);
      if (dq_da) {
        const Matrix ones = Matrix::Ones(1, sa.cols());
        const BackwardResult back = backward(member.net, cache, ones);
        *dq_da += back.input_grad.bottomRows(actions.rows());
      }
    }
    const Scalar n = static_cast<Scalar>(ens->members.size());
    q /= n;
    if (dq_da) *dq_da /= n;
    return q;
  };
}

/// Deployed Q for arbitrary state-action feature columns.
RowVector agent_q_batch(const Agent& agent, const Matrix& sa, RngStream& noise) {
  if (agent.is_flow())
    return q_value_batch(agent.fields[0].net, agent.critic_cfg, sa,
                         agent.critic_cfg.m, agent.eval_steps(), noise);
  return ensemble_q(agent.ensemble, sa, /*use_target=*/false);
}

/// Greedy one-hot next actions for tabular tasks, argmax over the target
/// critic with one shared noise draw per transition.
Matrix greedy_next_actions(const Agent& agent, const Batch& batch,
                           RngStream& noise) {
  const Eigen::Index b = batch.size();
  const int A = agent.feat.num_actions;
  const FlowCriticConfig& cfg = agent.critic_cfg;

  Matrix qa(b, A);
  if (agent.is_flow()) {
    RowVector draws(b);
    noise.fill_uniform(draws, cfg.noise_low, cfg.noise_high);
    Matrix sa(agent.feat.state_dim + A, b * A);
    RowVector z0(b * A);
    for (int a = 0; a < A; ++a) {
      sa.block(0, a * b, agent.feat.state_dim, b) = batch.next_states;
      sa.block(agent.feat.state_dim, a * b, A, b).setZero();
      sa.block(agent.feat.state_dim + a, a * b, 1, b).setOnes();
      z0.segment(a * b, b) = draws;
    }
    const int K = agent.eval_steps();
    const std::size_t active = cfg.clipped_double_q ? 2 : 1;
    RowVector q = RowVector::Zero(b * A);
    for (std::size_t f = 0; f < active; ++f) {
      const RowVector qf =
          integrate_batch(agent.fields[f].target.shadow, cfg, sa, z0, K);
      q = f == 0 ? qf : q.cwiseMin(qf);
    }
    qa = Eigen::Map<const Matrix>(q.data(), b, A);
  } else {
    Matrix sa(agent.feat.state_dim + A, b * A);
    for (int a = 0; a < A; ++a) {
      sa.block(0, a * b, agent.feat.state_dim, b) = batch.next_states;
      sa.block(agent.feat.state_dim, a * b, A, b).setZero();
      sa.block(agent.feat.state_dim + a, a * b, 1, b).setOnes();
    }
    const RowVector q = ensemble_q(agent.ensemble, sa, /*use_target=*/true);
    qa = Eigen::Map<const Matrix>(q.data(), b, A);
  }

  Matrix actions = Matrix::Zero(A, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    int best = 0;
    qa.row(i).maxCoeff(&best);
    actions(best, i) = 1.0;
  }
  return actions;
}

/// TD targets for the monolithic path: r + gamma * ensemble-mean target Q.
Vector monolithic_targets(const Agent& agent, const Batch& batch,
                          const Matrix& next_actions) {
  const Eigen::Index b = batch.size();
  Matrix sa(batch.next_states.rows() + next_actions.rows(), b);
  sa << batch.next_states, next_actions;
  const RowVector q = ensemble_q(agent.ensemble, sa, /*use_target=*/true);
  Vector y(b);
  for (Eigen::Index i = 0; i < b; ++i)
    y[i] = batch.terminal[i]
               ? batch.rewards[i]
               : batch.rewards[i] + agent.critic_cfg.gamma * q[i];
  return y;
}

Matrix next_policy_actions(const Agent& agent, const Batch& batch,
                           Streams& streams) {
  if (agent.feat.tabular)
    return greedy_next_actions(agent, batch, streams.greedy_noise);
  Matrix x(agent.feat.action_dim, batch.size());
  streams.policy_target.fill_normal(x);
  if (agent.exp.target_action == TargetActionSource::BcFlow)
    return bc_flow_actions(agent.bc, batch.next_states, x, /*clip=*/true);
  return one_step_actions(agent.one_step, batch.next_states, x, /*clip=*/true);
}

struct StepLosses {
  Scalar critic = 0.0;
  Scalar distill = 0.0;
};

StepLosses train_step(Agent& agent, const OfflineDataset& data,
                      const Batch& batch, Streams& streams,
                      std::vector<std::string>* trace) {
  (void)data;
  StepLosses losses;
  const FlowCriticConfig& cfg = agent.critic_cfg;

  const Matrix next_actions = next_policy_actions(agent, batch, streams);
  const int target_K = agent.eval_steps();

  if (agent.is_flow()) {
    const Vector y = bootstrap_targets(agent.fields, cfg, batch, next_actions,
                                       target_K, streams.target_noise);
    for (std::size_t f = 0; f < agent.fields.size(); ++f) {
      LossResult res;
      if (agent.exp.critic_type == CriticType::T0Only)
        res = t0_only_loss(agent.fields[f], cfg, batch, y, streams.loss_z[f]);
      else
        res = floq_loss(agent.fields[f], cfg, batch, y, streams.loss_z[f],
                        streams.loss_t[f]);
      adam_step(agent.fields[f].net, res.grads, agent.field_adams[f]);
      if (f == 0) losses.critic = res.loss;
    }
  } else {
    const Vector y = monolithic_targets(agent, batch, next_actions);
    Scalar total = 0.0;
    for (std::size_t i = 0; i < agent.ensemble.members.size(); ++i) {
      const LossResult res =
          monolithic_td_loss(agent.ensemble.members[i], batch, y);
      adam_step(agent.ensemble.members[i].net, res.grads,
                agent.ensemble_adams[i]);
      total += res.loss;
    }
    losses.critic = total / static_cast<Scalar>(agent.ensemble.members.size());
  }
  if (trace) trace->push_back("critic");

  if (agent.has_policy) {
    if (agent.is_flow()) {
      const LossResult res = distill_loss(agent.distill, agent.fields[0], cfg,
                                          batch, 1, streams.distill_noise);
      adam_step(agent.distill.body.net, res.grads, agent.distill_adam);
      losses.distill = res.loss;
      if (trace) trace->push_back("distill");
    }
    {
      const LossResult res =
          bc_flow_loss(agent.bc, batch, streams.bc_noise, streams.bc_time);
      adam_step(agent.bc.net, res.grads, agent.bc_adam);
      if (trace) trace->push_back("bc");
    }
    {
      // the monolithic baseline has no distilled critic; the one-step policy
      // then maximizes the ensemble directly
      CriticEval critic = agent.is_flow()
                              ? distilled_critic_eval(agent.distill)
                              : ensemble_critic_eval(agent.ensemble);
      Matrix x(agent.feat.action_dim, batch.size());
      streams.onestep_noise.fill_normal(x);
      const Matrix bc_actions =
          bc_flow_actions(agent.bc, batch.states, x, /*clip=*/false);
      const LossResult res = one_step_policy_loss_core(
          agent.one_step, batch.states, x, bc_actions, critic, agent.exp.alpha);
      adam_step(agent.one_step.net, res.grads, agent.one_step_adam);
      if (trace) trace->push_back("one-step");
    }
  }

  if (agent.is_flow()) {
    for (VelocityField& field : agent.fields)
      ema_update(field.target, field.net);
  } else {
    for (MonolithicCritic& member : agent.ensemble.members)
      ema_update(member.target, member.net);
  }
  if (trace) trace->push_back("ema");
  return losses;
}

}  // namespace

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

Matrix tabular_q_table(const Agent& agent, RngStream& noise) {
  const int S = agent.feat.num_states;
  const int A = agent.feat.num_actions;
  Matrix sa(S + A, S * A);
  Eigen::Index col = 0;
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) {
      sa.col(col).setZero();
      sa(s, col) = 1.0;
      sa(S + a, col) = 1.0;
      ++col;
    }
  const RowVector q = agent_q_batch(agent, sa, noise);
  Matrix table(S, A);
  col = 0;
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) table(s, a) = q[col++];
  return table;
}

Scalar oracle_sup_gap(const Agent& agent, const TabularMDP& mdp,
                      const QTable& oracle, RngStream& noise) {
  const Matrix q = tabular_q_table(agent, noise);
  Scalar gap = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    if (mdp.terminal[s]) continue;
    for (int a = 0; a < mdp.num_actions; ++a)
      gap = std::max(gap, std::abs(q(s, a) - oracle.q(s, a)));
  }
  return gap;
}

Scalar agent_q_value(const Agent& agent, const Vector& s, const Vector& a,
                     RngStream& noise) {
  Matrix sa(s.size() + a.size(), 1);
  sa.col(0) << s, a;
  return agent_q_batch(agent, sa, noise)[0];
}

namespace {

struct RolloutStats {
  Scalar mean_return = 0.0;
  Scalar success = 0.0;
  Scalar std_error = 0.0;
};

RolloutStats rollout_tabular(const Agent& agent, const TabularMDP& mdp,
                             int episodes, RngStream& q_noise,
                             RngStream& env_rng) {
  const Matrix q = tabular_q_table(agent, q_noise);
  std::vector<Scalar> returns;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    int s = sample_state(mdp.initial, env_rng);
    Scalar ret = 0.0;
    for (int t = 0; t < mdp.horizon; ++t) {
      if (mdp.terminal[s]) break;
      int a = 0;
      q.row(s).maxCoeff(&a);
      ret += mdp.reward(s, a);
      s = sample_state(mdp.transition[a].row(s).transpose(), env_rng);
    }
    if (s == mdp.goal_state) ++successes;
    returns.push_back(ret);
  }
  RolloutStats st;
  const Scalar n = static_cast<Scalar>(returns.size());
  for (Scalar r : returns) st.mean_return += r;
  st.mean_return /= n;
  Scalar var = 0.0;
  for (Scalar r : returns) var += (r - st.mean_return) * (r - st.mean_return);
  st.std_error = returns.size() > 1 ? std::sqrt(var / (n * (n - 1.0))) : 0.0;
  st.success = static_cast<Scalar>(successes) / n;
  return st;
}

RolloutStats rollout_continuous(const Agent& agent, const ContinuousEnv& env,
                                int episodes, RngStream& noise) {
  std::vector<Scalar> returns;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    Vector s = env.reset();
    Scalar ret = 0.0;
    bool reached = false;
    for (int t = 0; t < env.horizon; ++t) {
      const Vector a = sample_one_step_action(agent.one_step, s, noise);
      const auto step = env.step(s, a);
      ret += step.reward;
      if (step.terminal) {
        reached = true;
        break;
      }
      s = step.next;
    }
    if (reached) ++successes;
    returns.push_back(ret);
  }
  RolloutStats st;
  const Scalar n = static_cast<Scalar>(returns.size());
  for (Scalar r : returns) st.mean_return += r;
  st.mean_return /= n;
  Scalar var = 0.0;
  for (Scalar r : returns) var += (r - st.mean_return) * (r - st.mean_return);
  st.std_error = returns.size() > 1 ? std::sqrt(var / (n * (n - 1.0))) : 0.0;
  st.success = static_cast<Scalar>(successes) / n;
  return st;
}

MetricsRow eval_row(const Agent& agent, const Env& env,
                    const OfflineDataset& data,
                    const std::optional<QTable>& oracle, long step,
                    const StepLosses& losses, Streams& streams) {
  MetricsRow row;
  row.step = step;
  row.critic_loss = losses.critic;
  row.distill_loss = losses.distill;

  // probe set: up to 32 evenly spaced dataset pairs
  const std::int64_t n = static_cast<std::int64_t>(data.transitions.size());
  const int probes = static_cast<int>(std::min<std::int64_t>(32, n));
  if (probes > 0) {
    std::vector<std::int64_t> idx(probes);
    for (int i = 0; i < probes; ++i) idx[i] = (i * n) / probes;
    const Batch pb = gather_batch(data, agent.feat, idx);
    Matrix sa(pb.states.rows() + pb.actions.rows(), pb.size());
    sa << pb.states, pb.actions;
    row.mean_q = agent_q_batch(agent, sa, streams.eval).mean();

    if (agent.is_flow()) {
      const int grid = std::max(2, agent.critic_cfg.K);
      Scalar total = 0.0;
      const int cprobes = std::min(probes, 16);
      for (int i = 0; i < cprobes; ++i)
        total += curvature(agent.fields[0], agent.critic_cfg,
                           Vector(pb.states.col(i)), Vector(pb.actions.col(i)),
                           grid, 2, streams.eval);
      row.curvature = total / cprobes;
    }
  }

  if (const auto* tab = std::get_if<TabularMDP>(&env)) {
    row.oracle_gap = oracle_sup_gap(agent, *tab, *oracle, streams.eval);
    const RolloutStats st = rollout_tabular(agent, *tab, agent.exp.eval_episodes,
                                            streams.eval, streams.eval_env);
    row.policy_score = st.mean_return;
  } else {
    const RolloutStats st =
        rollout_continuous(agent, std::get<ContinuousEnv>(env),
                           agent.exp.eval_episodes, streams.eval_env);
    row.policy_score = st.mean_return;
  }
  return row;
}

}  // namespace

TrainOutput train_offline(const ExperimentConfig& cfg, const Env& env,
                          const OfflineDataset& data,
                          std::vector<std::string>* trace) {
  TrainOutput out;
  out.agent = make_agent(cfg, env, data.meta);
  Agent& agent = out.agent;
  if (cfg.gradient_steps > 0 && data.transitions.empty())
    throw ConfigError("cannot train on an empty dataset");

  Streams streams(cfg.seed);
  std::optional<QTable> oracle;
  if (const auto* tab = std::get_if<TabularMDP>(&env))
    oracle = value_iteration(*tab, 1e-10);

  StepLosses losses;
  for (long step = 1; step <= cfg.gradient_steps; ++step) {
    std::vector<std::int64_t> idx(cfg.batch_size);
    for (auto& i : idx)
      i = static_cast<std::int64_t>(
          streams.batch.uniform_below(data.transitions.size()));
    const Batch batch = gather_batch(data, agent.feat, idx);
    try {
      losses = train_step(agent, data, batch, streams, trace);
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(step) + ": " + e.what());
    }
    if (step % cfg.eval_interval == 0 || step == cfg.gradient_steps)
      out.metrics.rows.push_back(
          eval_row(agent, env, data, oracle, step, losses, streams));
  }
  return out;
}

TrainingMetrics finetune_online(Agent& agent, const Env& env,
                                OfflineDataset& buffer, long online_steps) {
  require(online_steps >= 0, "online_steps must be non-negative");
  const ExperimentConfig& cfg = agent.exp;
  Streams streams(cfg.seed + 0x0F1AE);  // distinct from the offline phase
  RngStream explore(cfg.seed, "finetune.explore");
  RngStream env_rng(cfg.seed, "finetune.env");

  std::optional<QTable> oracle;
  const TabularMDP* tab = std::get_if<TabularMDP>(&env);
  if (tab) oracle = value_iteration(*tab, 1e-10);

  TrainingMetrics metrics;
  if (online_steps == 0) {
    // pure evaluation of the checkpoint
    StepLosses losses;
    metrics.rows.push_back(
        eval_row(agent, env, buffer, oracle, 0, losses, streams));
    return metrics;
  }

  // episode state
  Vector cont_state;
  int tab_state = 0;
  int steps_in_episode = 0;
  const ContinuousEnv* cont = std::get_if<ContinuousEnv>(&env);
  if (cont)
    cont_state = cont->reset();
  else
    tab_state = sample_state(tab->initial, env_rng);

  std::vector<Scalar> episode_returns;
  Scalar running_return = 0.0;

  StepLosses losses;
  for (long step = 1; step <= online_steps; ++step) {
    // one environment step: one-step policy plus exploration noise
    if (cont) {
      Vector a = sample_one_step_action(agent.one_step, cont_state, explore);
      for (int i = 0; i < agent.feat.action_dim; ++i) {
        const Scalar span = agent.feat.action_high[i] - agent.feat.action_low[i];
        a[i] += cfg.exploration_noise * span * explore.normal();
      }
      a = cont->clip_action(a);
      const auto sr = cont->step(cont_state, a);
      running_return += sr.reward;
      ++steps_in_episode;
      const bool timeout = !sr.terminal && steps_in_episode >= cont->horizon;
      buffer.transitions.push_back(
          Transition{cont_state, a, sr.reward, sr.next, sr.terminal});
      if (sr.terminal || timeout) {
        episode_returns.push_back(running_return);
        running_return = 0.0;
        steps_in_episode = 0;
        cont_state = cont->reset();
      } else {
        cont_state = sr.next;
      }
    } else {
      // epsilon-greedy exploration on tabular tasks
      int a;
      if (explore.uniform() < 0.1) {
        a = static_cast<int>(explore.uniform_below(tab->num_actions));
      } else {
        Matrix sa(tab->num_states + tab->num_actions, tab->num_actions);
        for (int act = 0; act < tab->num_actions; ++act) {
          sa.col(act).setZero();
          sa(tab_state, act) = 1.0;
          sa(tab->num_states + act, act) = 1.0;
        }
        const RowVector q = agent_q_batch(agent, sa, explore);
        Eigen::Index best = 0;
        q.maxCoeff(&best);
        a = static_cast<int>(best);
      }
      const int ns = sample_state(tab->transition[a].row(tab_state).transpose(),
                                  env_rng);
      const Scalar r = tab->reward(tab_state, a);
      const bool term = tab->terminal[ns] != 0;
      running_return += r;
      ++steps_in_episode;
      const bool timeout = !term && steps_in_episode >= tab->horizon;
      Vector sv(1), av(1), nsv(1);
      sv[0] = tab_state;
      av[0] = a;
      nsv[0] = ns;
      buffer.transitions.push_back(Transition{sv, av, r, nsv, term});
      if (term || timeout) {
        episode_returns.push_back(running_return);
        running_return = 0.0;
        steps_in_episode = 0;
        tab_state = sample_state(tab->initial, env_rng);
      } else {
        tab_state = ns;
      }
    }

    // one gradient step on the grown buffer (1:1 update-to-data ratio)
    std::vector<std::int64_t> idx(cfg.batch_size);
    for (auto& i : idx)
      i = static_cast<std::int64_t>(
          streams.batch.uniform_below(buffer.transitions.size()));
    const Batch batch = gather_batch(buffer, agent.feat, idx);
    try {
      losses = train_step(agent, buffer, batch, streams, nullptr);
    } catch (const NumericalError& e) {
      throw NumericalError("online step " + std::to_string(step) + ": " +
                           e.what());
    }

    if (step % cfg.eval_interval == 0 || step == online_steps) {
      MetricsRow row =
          eval_row(agent, env, buffer, oracle, step, losses, streams);
      if (!episode_returns.empty()) {
        Scalar sum = 0.0;
        for (Scalar r : episode_returns) sum += r;
        row.online_return = sum / static_cast<Scalar>(episode_returns.size());
        episode_returns.clear();
      }
      metrics.rows.push_back(row);
    }
  }
  return metrics;
}

EvalResult evaluate(const Agent& agent, const Env& env, int episodes,
                    std::uint64_t seed) {
  require(episodes >= 1, "episodes must be positive");
  const FeatureSpec feat = feature_spec(env);
  if (feat.state_dim != agent.feat.state_dim ||
      feat.action_dim != agent.feat.action_dim)
    throw ConfigError("checkpoint does not match environment dimensions");
  RngStream q_noise(seed, "evaluate.qnoise");
  RngStream env_rng(seed, "evaluate.env");
  RolloutStats st;
  if (const auto* tab = std::get_if<TabularMDP>(&env)) {
    st = rollout_tabular(agent, *tab, episodes, q_noise, env_rng);
  } else {
    st = rollout_continuous(agent, std::get<ContinuousEnv>(env), episodes,
                            env_rng);
  }
  return EvalResult{st.mean_return, st.success, st.std_error};
}

// ---------------------------------------------------------------------------
// ablation driver
// ---------------------------------------------------------------------------

ExperimentConfig apply_axis(const ExperimentConfig& base,
                            const std::string& axis, const std::string& value) {
  KeyValues kv = base.to_key_values();
  if (axis == "K") {
    kv["critic.K"] = value;
  } else if (axis == "kappa") {
    kv["critic.kappa"] = value;
  } else if (axis == "sigma") {
    kv["critic.sigma_mode"] = "absolute";
    kv["critic.sigma"] = value;
  } else if (axis == "ensemble") {
    kv["critic.type"] = "ensemble";
    kv["critic.ensemble_n"] = value;
  } else if (axis == "t0-only") {
    kv["critic.type"] =
        (value == "1" || value == "true") ? "t0-only" : "floq";
  } else if (axis == "interpolant-embed") {
    kv["critic.interpolant_embed"] = value;
  } else if (axis == "time-embed") {
    kv["critic.time_embed"] = value;
  } else if (axis == "distill-steps") {
    kv["critic.K_distill"] = value;
  } else {
    throw ConfigError("unknown ablation axis: " + axis);
  }
  return experiment_from(kv);
}

AblationResult ablate(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values,
                      const std::vector<std::uint64_t>& seeds) {
  require(!values.empty(), "ablation needs at least one value");
  require(!seeds.empty(), "ablation needs at least one seed");
  AblationResult result;
  for (const std::string& value : values) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig cfg = apply_axis(base, axis, value);
      cfg.seed = seed;
      const Env env = build_env(cfg);
      const OfflineDataset data = build_dataset(cfg, env);
      TrainOutput out = train_offline(cfg, env, data);
      result.runs.push_back(
          AblationRun{axis, value, seed, std::move(out.metrics)});
    }
  }
  return result;
}

void save_ablation_csv(const AblationResult& result,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open ablation file: " + path.string());
  out << "# FLOQMETRICS1\n";
  out << "axis,value,seed," << kMetricsHeader << '\n';
  for (const AblationRun& run : result.runs)
    for (const MetricsRow& r : run.metrics.rows) {
      out << run.axis << ',' << run.value << ',' << run.seed << ',' << r.step
          << ',' << fmt17(r.critic_loss) << ',' << fmt17(r.mean_q) << ','
          << fmt17(r.oracle_gap) << ',' << fmt17(r.curvature) << ','
          << fmt17(r.policy_score) << ',' << fmt17(r.distill_loss) << ','
          << fmt17(r.online_return) << '\n';
    }
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_agent(const Agent& agent, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "experiment.cfg");
    if (!out)
      throw ConfigError("cannot write experiment config in " + dir.string());
    out << agent.exp.dump();
  }
  save_critic_config(agent.critic_cfg, dir / "critic.json");
  if (agent.is_flow()) {
    for (std::size_t f = 0; f < agent.fields.size(); ++f) {
      const std::string base = "velocity_" + std::to_string(f);
      save_network(agent.fields[f].net, dir / (base + ".net"), "velocity");
      save_network(agent.fields[f].target.shadow, dir / (base + "_ema.net"),
                   "velocity-ema");
    }
  } else {
    for (std::size_t i = 0; i < agent.ensemble.members.size(); ++i) {
      const std::string base = "member_" + std::to_string(i);
      save_network(agent.ensemble.members[i].net, dir / (base + ".net"),
                   "monolithic");
      save_network(agent.ensemble.members[i].target.shadow,
                   dir / (base + "_ema.net"), "monolithic-ema");
    }
  }
  if (agent.has_policy) {
    save_network(agent.bc.net, dir / "bc_policy.net", "bc-flow");
    save_network(agent.one_step.net, dir / "one_step.net", "one-step");
    save_network(agent.distill.body.net, dir / "distill.net", "distill");
  }
}

Agent load_agent(const std::filesystem::path& dir) {
  const ExperimentConfig cfg =
      experiment_from(parse_config_file(dir / "experiment.cfg"));
  const Env env = build_env(cfg);
  Agent agent;
  agent.exp = cfg;
  agent.feat = feature_spec(env);
  agent.critic_cfg = load_critic_config(dir / "critic.json");

  auto load_role = [&](const std::filesystem::path& path,
                       const std::string& role) {
    LoadedNetwork ln = load_network(path);
    if (ln.role != role)
      throw ConfigError("checkpoint " + path.string() + " has role \"" +
                        ln.role + "\", expected \"" + role + "\"");
    return std::move(ln.net);
  };

  if (cfg.critic_type == CriticType::Floq ||
      cfg.critic_type == CriticType::T0Only) {
    const int num_fields = cfg.clipped_double_q ? 2 : 1;
    for (int f = 0; f < num_fields; ++f) {
      const std::string base = "velocity_" + std::to_string(f);
      VelocityField field;
      field.net = load_role(dir / (base + ".net"), "velocity");
      field.target = make_ema(
          load_role(dir / (base + "_ema.net"), "velocity-ema"), cfg.tau);
      agent.fields.push_back(std::move(field));
      agent.field_adams.push_back(make_adam(agent.fields.back().net, cfg.lr));
    }
  } else {
    const int n = cfg.critic_type == CriticType::Ensemble ? cfg.ensemble_n : 1;
    for (int i = 0; i < n; ++i) {
      const std::string base = "member_" + std::to_string(i);
      MonolithicCritic member;
      member.net = load_role(dir / (base + ".net"), "monolithic");
      member.target = make_ema(
          load_role(dir / (base + "_ema.net"), "monolithic-ema"), cfg.tau);
      agent.ensemble.members.push_back(std::move(member));
      agent.ensemble_adams.push_back(
          make_adam(agent.ensemble.members.back().net, cfg.lr));
    }
  }

  if (!agent.feat.tabular) {
    agent.has_policy = true;
    agent.bc.net = load_role(dir / "bc_policy.net", "bc-flow");
    agent.bc.flow_steps = cfg.actor_flow_steps;
    agent.bc.time_embed = make_fourier_embedding(cfg.fourier_dim);
    agent.bc.action_low = agent.feat.action_low;
    agent.bc.action_high = agent.feat.action_high;
    agent.bc_adam = make_adam(agent.bc.net, cfg.lr);
    agent.one_step.net = load_role(dir / "one_step.net", "one-step");
    agent.one_step.action_low = agent.feat.action_low;
    agent.one_step.action_high = agent.feat.action_high;
    agent.one_step_adam = make_adam(agent.one_step.net, cfg.lr);
    agent.distill.body.net = load_role(dir / "distill.net", "distill");
    agent.distill.body.target = make_ema(agent.distill.body.net, 1.0);
    agent.distill_adam = make_adam(agent.distill.body.net, cfg.lr);
  }

  // dimension cross-check against the env
  const int sa_dim = agent.feat.state_dim + agent.feat.action_dim;
  const int expected_in =
      sa_dim + agent.critic_cfg.interpolant_dim() + agent.critic_cfg.time_dim();
  if (agent.is_flow() && agent.fields[0].net.input_dim() != expected_in)
    throw ConfigError("checkpoint network does not match environment dims");
  if (!agent.is_flow() &&
      agent.ensemble.members[0].net.input_dim() != sa_dim)
    throw ConfigError("checkpoint network does not match environment dims");
  return agent;
}

}  // namespace floq
