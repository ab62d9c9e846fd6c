// SPDX-License-Identifier: Apache-2.0
#include "floq/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace floq {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_scalar(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

Scalar to_scalar(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const Scalar v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad number \"" + value + "\"");
  }
}

long to_long(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad integer \"" + value + "\"");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key " + key + ": bad boolean \"" + value + "\"");
}

}  // namespace

KeyValues parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": empty key");
    kv[key] = value;
  }
  return kv;
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be key=value, got \"" + text + "\"");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    out.push_back(static_cast<int>(to_long("list", tok)));
  }
  if (out.empty()) throw ConfigError("empty integer list: \"" + text + "\"");
  return out;
}

const char* to_string(CriticType type) {
  switch (type) {
    case CriticType::Floq: return "floq";
    case CriticType::T0Only: return "t0-only";
    case CriticType::Monolithic: return "monolithic";
    case CriticType::Ensemble: return "ensemble";
  }
  return "?";
}

KeyValues ExperimentConfig::to_key_values() const {
  KeyValues kv;
  kv["env.family"] = env_family;
  for (const auto& [k, v] : env_params) kv["env." + k] = v;
  kv["gamma"] = fmt_scalar(gamma);
  kv["dataset.path"] = dataset_path;
  kv["dataset.behavior"] = behavior;
  kv["dataset.size"] = std::to_string(dataset_size);
  kv["dataset.seed"] = std::to_string(dataset_seed);
  kv["critic.type"] = to_string(critic_type);
  kv["critic.K"] = std::to_string(K);
  kv["critic.m"] = std::to_string(m);
  kv["critic.kappa"] = fmt_scalar(kappa);
  kv["critic.K_distill"] = std::to_string(K_distill);
  kv["critic.clipped_double_q"] = clipped_double_q ? "true" : "false";
  kv["critic.ensemble_n"] = std::to_string(ensemble_n);
  kv["critic.hidden"] = join_ints(critic_hidden);
  kv["critic.num_bins"] = std::to_string(num_bins);
  kv["critic.sigma_mode"] =
      sigma_mode == SigmaMode::Fraction ? "fraction" : "absolute";
  kv["critic.sigma"] = fmt_scalar(sigma);
  kv["critic.interpolant_embed"] = to_string(interpolant_embed);
  kv["critic.time_embed"] = to_string(time_embed);
  kv["critic.fourier_dim"] = std::to_string(fourier_dim);
  kv["critic.q_min"] = q_range_override ? fmt_scalar(q_min_override) : "auto";
  kv["critic.q_max"] = q_range_override ? fmt_scalar(q_max_override) : "auto";
  kv["critic.target_action"] =
      target_action == TargetActionSource::OneStep ? "one-step" : "bc-flow";
  kv["tau"] = fmt_scalar(tau);
  kv["actor.M"] = std::to_string(actor_flow_steps);
  kv["actor.alpha"] = fmt_scalar(alpha);
  kv["actor.hidden"] = join_ints(actor_hidden);
  kv["opt.lr"] = fmt_scalar(lr);
  kv["opt.batch_size"] = std::to_string(batch_size);
  kv["opt.gradient_steps"] = std::to_string(gradient_steps);
  kv["opt.eval_interval"] = std::to_string(eval_interval);
  kv["opt.eval_episodes"] = std::to_string(eval_episodes);
  kv["opt.seed"] = std::to_string(seed);
  kv["finetune.exploration_noise"] = fmt_scalar(exploration_noise);
  return kv;
}

std::string ExperimentConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : to_key_values()) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

ExperimentConfig experiment_from(const KeyValues& kv) {
  ExperimentConfig cfg;
  bool has_qmin = false, has_qmax = false;
  for (const auto& [key, value] : kv) {
    if (key == "env.family") {
      cfg.env_family = value;
    } else if (key.rfind("env.", 0) == 0) {
      cfg.env_params[key.substr(4)] = value;
    } else if (key == "gamma") {
      cfg.gamma = to_scalar(key, value);
    } else if (key == "dataset.path") {
      cfg.dataset_path = value;
    } else if (key == "dataset.behavior") {
      cfg.behavior = value;
    } else if (key == "dataset.size") {
      cfg.dataset_size = to_long(key, value);
    } else if (key == "dataset.seed") {
      cfg.dataset_seed = static_cast<std::uint64_t>(to_long(key, value));
    } else if (key == "critic.type") {
      if (value == "floq") cfg.critic_type = CriticType::Floq;
      else if (value == "t0-only") cfg.critic_type = CriticType::T0Only;
      else if (value == "monolithic") cfg.critic_type = CriticType::Monolithic;
      else if (value == "ensemble") cfg.critic_type = CriticType::Ensemble;
      else throw ConfigError("unknown critic.type: " + value);
    } else if (key == "critic.K") {
      cfg.K = static_cast<int>(to_long(key, value));
    } else if (key == "critic.m") {
      cfg.m = static_cast<int>(to_long(key, value));
    } else if (key == "critic.kappa") {
      cfg.kappa = to_scalar(key, value);
    } else if (key == "critic.K_distill") {
      cfg.K_distill = static_cast<int>(to_long(key, value));
    } else if (key == "critic.clipped_double_q") {
      cfg.clipped_double_q = to_bool(key, value);
    } else if (key == "critic.ensemble_n") {
      cfg.ensemble_n = static_cast<int>(to_long(key, value));
    } else if (key == "critic.hidden") {
      cfg.critic_hidden = parse_int_list(value);
    } else if (key == "critic.num_bins") {
      cfg.num_bins = static_cast<int>(to_long(key, value));
    } else if (key == "critic.sigma_mode") {
      if (value == "fraction") cfg.sigma_mode = SigmaMode::Fraction;
      else if (value == "absolute") cfg.sigma_mode = SigmaMode::Absolute;
      else throw ConfigError("unknown critic.sigma_mode: " + value);
    } else if (key == "critic.sigma") {
      cfg.sigma = to_scalar(key, value);
    } else if (key == "critic.interpolant_embed") {
      cfg.interpolant_embed = interpolant_embed_from_string(value);
    } else if (key == "critic.time_embed") {
      cfg.time_embed = time_embed_from_string(value);
    } else if (key == "critic.fourier_dim") {
      cfg.fourier_dim = static_cast<int>(to_long(key, value));
    } else if (key == "critic.q_min") {
      if (value != "auto") {
        cfg.q_min_override = to_scalar(key, value);
        has_qmin = true;
      }
    } else if (key == "critic.q_max") {
      if (value != "auto") {
        cfg.q_max_override = to_scalar(key, value);
        has_qmax = true;
      }
    } else if (key == "critic.target_action") {
      if (value == "one-step") cfg.target_action = TargetActionSource::OneStep;
      else if (value == "bc-flow") cfg.target_action = TargetActionSource::BcFlow;
      else throw ConfigError("unknown critic.target_action: " + value);
    } else if (key == "tau") {
      cfg.tau = to_scalar(key, value);
    } else if (key == "actor.M") {
      cfg.actor_flow_steps = static_cast<int>(to_long(key, value));
    } else if (key == "actor.alpha") {
      cfg.alpha = to_scalar(key, value);
    } else if (key == "actor.hidden") {
      cfg.actor_hidden = parse_int_list(value);
    } else if (key == "opt.lr") {
      cfg.lr = to_scalar(key, value);
    } else if (key == "opt.batch_size") {
      cfg.batch_size = static_cast<int>(to_long(key, value));
    } else if (key == "opt.gradient_steps") {
      cfg.gradient_steps = to_long(key, value);
    } else if (key == "opt.eval_interval") {
      cfg.eval_interval = to_long(key, value);
    } else if (key == "opt.eval_episodes") {
      cfg.eval_episodes = static_cast<int>(to_long(key, value));
    } else if (key == "opt.seed") {
      cfg.seed = static_cast<std::uint64_t>(to_long(key, value));
    } else if (key == "finetune.exploration_noise") {
      cfg.exploration_noise = to_scalar(key, value);
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  if (has_qmin != has_qmax)
    throw ConfigError("critic.q_min and critic.q_max must be set together");
  cfg.q_range_override = has_qmin;

  // basic sanity; the rest is validated when the agent is built
  if (cfg.K < 1 || cfg.m < 1) throw ConfigError("critic.K and critic.m must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("opt.batch_size must be >= 1");
  if (cfg.gradient_steps < 0) throw ConfigError("opt.gradient_steps must be >= 0");
  if (cfg.eval_interval < 1) throw ConfigError("opt.eval_interval must be >= 1");
  if (cfg.lr <= 0) throw ConfigError("opt.lr must be positive");
  if (cfg.alpha < 0) throw ConfigError("actor.alpha must be non-negative");
  if (cfg.ensemble_n < 1) throw ConfigError("critic.ensemble_n must be >= 1");
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides) {
  KeyValues kv;
  if (!path.empty()) kv = parse_config_file(path);
  for (const std::string& o : overrides) {
    auto [k, v] = parse_override(o);
    kv[k] = v;
  }
  return experiment_from(kv);
}

}  // namespace floq
