// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "floq/config.hpp"
#include "floq/dataset.hpp"
#include "floq/harness.hpp"
#include "floq/oracles.hpp"

namespace {

using namespace floq;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path,
                  "experiment config file (key = value lines)");
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set critic.K=4")
      ->take_all();
}

ExperimentConfig resolve(const CommonArgs& args) {
  return load_experiment(args.config_path, args.overrides);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream ss(text);
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"floq: flow-matching Q-function training harness"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, finetune_args, eval_args, ablate_args,
      oracle_args;

  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  add_common(gen, gen_args);
  std::string gen_out = "dataset.csv";
  gen->add_option("-o,--out", gen_out, "output CSV path");

  auto* train = app.add_subcommand("train", "offline training run");
  add_common(train, train_args);
  std::string train_out = "run";
  train->add_option("-o,--out", train_out, "output directory");

  auto* finetune =
      app.add_subcommand("finetune", "online fine-tuning from a checkpoint");
  add_common(finetune, finetune_args);
  std::string ft_checkpoint, ft_out = "finetune";
  long ft_steps = 10000;
  finetune->add_option("--checkpoint", ft_checkpoint, "agent directory")
      ->required();
  finetune->add_option("--online-steps", ft_steps, "environment/gradient steps");
  finetune->add_option("-o,--out", ft_out, "output directory");

  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(eval, eval_args);
  std::string ev_checkpoint;
  int ev_episodes = 50;
  std::uint64_t ev_seed = 0;
  eval->add_option("--checkpoint", ev_checkpoint, "agent directory")->required();
  eval->add_option("--episodes", ev_episodes, "evaluation episodes");
  eval->add_option("--seed", ev_seed, "evaluation seed");

  auto* ablate_cmd = app.add_subcommand("ablate", "sweep one config axis");
  add_common(ablate_cmd, ablate_args);
  std::string ab_axis, ab_values, ab_seeds = "0,1,2", ab_out = "ablation.csv";
  ablate_cmd->add_option("--axis", ab_axis, "axis name")->required();
  ablate_cmd->add_option("--values", ab_values, "comma-separated values")
      ->required();
  ablate_cmd->add_option("--seeds", ab_seeds, "comma-separated seeds");
  ablate_cmd->add_option("-o,--out", ab_out, "output CSV path");

  auto* oracle = app.add_subcommand("oracle", "exact Q-table via value iteration");
  add_common(oracle, oracle_args);
  std::string or_out = "qstar.csv";
  oracle->add_option("-o,--out", or_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    const ExperimentConfig cfg = resolve(gen_args);
    const Env env = build_env(cfg);
    const OfflineDataset ds = generate_dataset(
        env, parse_behavior(cfg.behavior), cfg.dataset_size, cfg.dataset_seed);
    save_dataset(ds, gen_out);
    std::cout << "wrote " << ds.transitions.size() << " transitions to "
              << gen_out << "\n";
    return 0;
  }

  if (train->parsed()) {
    const ExperimentConfig cfg = resolve(train_args);
    const Env env = build_env(cfg);
    const OfflineDataset data = build_dataset(cfg, env);
    TrainOutput out = train_offline(cfg, env, data);
    std::filesystem::create_directories(train_out);
    save_metrics_csv(out.metrics, std::filesystem::path(train_out) /
                                      "metrics.csv");
    save_agent(out.agent, std::filesystem::path(train_out) / "agent");
    if (!out.metrics.rows.empty()) {
      const MetricsRow& last = out.metrics.rows.back();
      std::printf("step %ld  loss %.6g  mean_q %.6g  oracle_gap %.6g  score %.6g\n",
                  last.step, last.critic_loss, last.mean_q, last.oracle_gap,
                  last.policy_score);
    }
    std::cout << "run written to " << train_out << "\n";
    return 0;
  }

  if (finetune->parsed()) {
    Agent agent = load_agent(ft_checkpoint);
    for (const std::string& o : finetune_args.overrides) {
      auto kv = agent.exp.to_key_values();
      auto [k, v] = parse_override(o);
      kv[k] = v;
      agent.exp = experiment_from(kv);
    }
    const Env env = build_env(agent.exp);
    OfflineDataset buffer = build_dataset(agent.exp, env);
    const TrainingMetrics metrics =
        finetune_online(agent, env, buffer, ft_steps);
    std::filesystem::create_directories(ft_out);
    save_metrics_csv(metrics, std::filesystem::path(ft_out) / "metrics.csv");
    save_agent(agent, std::filesystem::path(ft_out) / "agent");
    std::cout << "fine-tuned for " << ft_steps << " steps; run written to "
              << ft_out << "\n";
    return 0;
  }

  if (eval->parsed()) {
    const Agent agent = load_agent(ev_checkpoint);
    const Env env = build_env(agent.exp);
    const EvalResult res = evaluate(agent, env, ev_episodes, ev_seed);
    std::printf("mean_return %.6g  success_rate %.6g  std_error %.6g\n",
                res.mean_return, res.success_rate, res.std_error);
    return 0;
  }

  if (ablate_cmd->parsed()) {
    const ExperimentConfig cfg = resolve(ablate_args);
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_list(ab_seeds))
      seeds.push_back(std::stoull(s));
    const AblationResult result =
        ablate(cfg, ab_axis, split_list(ab_values), seeds);
    save_ablation_csv(result, ab_out);
    std::cout << result.runs.size() << " runs written to " << ab_out << "\n";
    return 0;
  }

  if (oracle->parsed()) {
    const ExperimentConfig cfg = resolve(oracle_args);
    const Env env = build_env(cfg);
    const auto* tab = std::get_if<TabularMDP>(&env);
    if (!tab) throw ConfigError("oracle requires a tabular environment");
    const QTable table = value_iteration(*tab, 1e-10);
    save_qtable_csv(table, or_out);
    std::cout << "Q* written to " << or_out << " (residual " << table.residual
              << ")\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const floq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const floq::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
