// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "floq/dataset.hpp"
#include "floq/oracles.hpp"

using namespace floq;

namespace {

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// upper-tail critical values of chi-squared at p = 0.01
constexpr double kChi2Crit[] = {0.0,    6.635,  9.210,  11.345,
                                13.277, 15.086, 16.812, 18.475};

}  // namespace

TEST_CASE("behavior specs parse and print") {
  CHECK(parse_behavior("random").kind == BehaviorSpec::Kind::Random);
  const BehaviorSpec eps = parse_behavior("eps-greedy(0.1)");
  CHECK(eps.kind == BehaviorSpec::Kind::EpsGreedyOptimal);
  CHECK(eps.param == doctest::Approx(0.1));
  CHECK(behavior_id(parse_behavior("mixture(0.5)")) == "mixture(0.5)");
  CHECK_THROWS_AS((void)parse_behavior("expert"), ConfigError);
}

TEST_CASE("identical env behavior and seed give bit-identical files") {
  const Env env = make_env("chain", {{"n", "3"}, {"gamma", "0.9"}});
  const BehaviorSpec behavior = parse_behavior("mixture(0.5)");
  const auto tmp = std::filesystem::temp_directory_path();
  const auto p1 = tmp / "floq_ds1.csv";
  const auto p2 = tmp / "floq_ds2.csv";
  save_dataset(generate_dataset(env, behavior, 500, 7), p1);
  save_dataset(generate_dataset(env, behavior, 500, 7), p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("greedy-optimal behavior on a deterministic env repeats trajectories") {
  const Env env = make_env("chain", {{"n", "4"}, {"gamma", "0.9"}});
  const OfflineDataset ds =
      generate_dataset(env, parse_behavior("eps-greedy(0)"), 60, 3);
  // optimal play on chain(4) is a fixed 3-step episode, repeated
  const int period = 3;
  for (std::size_t i = period; i < ds.transitions.size(); ++i) {
    const Transition& a = ds.transitions[i];
    const Transition& b = ds.transitions[i - period];
    CHECK(a.state[0] == b.state[0]);
    CHECK(a.action[0] == b.action[0]);
    CHECK(a.reward == b.reward);
  }
}

TEST_CASE("random behavior frequencies match the transition model") {
  // chain transitions are deterministic: every record must land on the unique
  // successor (chi-squared statistic is exactly zero)
  const Env chain = make_env("chain", {{"n", "3"}, {"gamma", "0.9"}});
  const auto& mdp = std::get<TabularMDP>(chain);
  const OfflineDataset ds =
      generate_dataset(chain, parse_behavior("random"), 10000, 11);
  for (const Transition& t : ds.transitions) {
    const int s = static_cast<int>(t.state[0]);
    const int a = static_cast<int>(t.action[0]);
    const int ns = static_cast<int>(t.next_state[0]);
    CHECK(mdp.transition[a](s, ns) == 1.0);
  }

  // gridworld with slip is genuinely stochastic; aggregate a chi-squared test
  const Env grid =
      make_env("gridworld", {{"width", "4"}, {"height", "4"}, {"slip", "0.3"}});
  const auto& gw = std::get<TabularMDP>(grid);
  const OfflineDataset gds =
      generate_dataset(grid, parse_behavior("random"), 10000, 11);
  std::map<std::pair<int, int>, std::map<int, int>> counts;
  for (const Transition& t : gds.transitions)
    counts[{static_cast<int>(t.state[0]), static_cast<int>(t.action[0])}]
          [static_cast<int>(t.next_state[0])]++;
  int tested = 0;
  for (const auto& [sa, next_counts] : counts) {
    int total = 0;
    for (const auto& [ns, c] : next_counts) total += c;
    if (total < 200) continue;
    std::vector<int> support;
    for (int ns = 0; ns < gw.num_states; ++ns)
      if (gw.transition[sa.second](sa.first, ns) > 0.0) support.push_back(ns);
    double chi2 = 0.0;
    for (int ns : support) {
      const double expected =
          total * gw.transition[sa.second](sa.first, ns);
      auto it = next_counts.find(ns);
      const double observed = it == next_counts.end() ? 0.0 : it->second;
      chi2 += (observed - expected) * (observed - expected) / expected;
    }
    for (const auto& [ns, c] : next_counts)
      CHECK(gw.transition[sa.second](sa.first, ns) > 0.0);
    const std::size_t df = support.size() - 1;
    REQUIRE(df < std::size(kChi2Crit));
    CHECK(chi2 < kChi2Crit[df]);
    ++tested;
  }
  CHECK(tested >= 5);
}

TEST_CASE("mixture datasets contain optimal and random records") {
  const Env grid =
      make_env("gridworld", {{"width", "5"}, {"height", "5"}, {"slip", "0.1"}});
  const auto& mdp = std::get<TabularMDP>(grid);
  const QTable qstar = value_iteration(mdp, 1e-10);
  const OfflineDataset ds =
      generate_dataset(grid, parse_behavior("mixture(0.5)"), 4000, 5);
  int optimal = 0, other = 0;
  for (const Transition& t : ds.transitions) {
    const int s = static_cast<int>(t.state[0]);
    const int a = static_cast<int>(t.action[0]);
    (a == qstar.greedy_action(s) ? optimal : other)++;
  }
  CHECK(optimal > 0);
  CHECK(other > 0);
}

TEST_CASE("reward bound metadata is exact") {
  const Env grid =
      make_env("gridworld", {{"width", "4"}, {"height", "4"}, {"slip", "0.1"}});
  const OfflineDataset ds =
      generate_dataset(grid, parse_behavior("mixture(0.5)"), 3000, 9);
  Scalar lo = ds.transitions.front().reward, hi = lo;
  for (const Transition& t : ds.transitions) {
    lo = std::min(lo, t.reward);
    hi = std::max(hi, t.reward);
  }
  CHECK(ds.meta.reward_min == lo);
  CHECK(ds.meta.reward_max == hi);
}

TEST_CASE("horizon overflow truncates and flags non-terminal") {
  // random walk on a long chain rarely reaches the goal within the horizon
  const Env env = make_env("chain", {{"n", "30"}, {"gamma", "0.9"}});
  const auto& mdp = std::get<TabularMDP>(env);
  const OfflineDataset ds =
      generate_dataset(env, parse_behavior("random"), 3 * mdp.horizon, 1);
  int episode_len = 0;
  bool saw_truncation = false;
  for (const Transition& t : ds.transitions) {
    ++episode_len;
    if (t.terminal) {
      episode_len = 0;
    } else if (episode_len == mdp.horizon) {
      saw_truncation = true;
      CHECK(!t.terminal);
      episode_len = 0;
    }
  }
  CHECK(saw_truncation);
}

TEST_CASE("dataset save/load round-trip is bit-exact") {
  const Env maze = make_env("point-maze", {});
  const OfflineDataset ds =
      generate_dataset(maze, parse_behavior("mixture(0.7)"), 400, 13);
  const auto tmp = std::filesystem::temp_directory_path();
  const auto p1 = tmp / "floq_rt1.csv";
  const auto p2 = tmp / "floq_rt2.csv";
  save_dataset(ds, p1);
  const OfflineDataset loaded = load_dataset(p1);
  CHECK(loaded.meta.env == ds.meta.env);
  CHECK(loaded.transitions.size() == ds.transitions.size());
  save_dataset(loaded, p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  for (std::size_t i = 0; i < ds.transitions.size(); ++i) {
    CHECK((ds.transitions[i].state - loaded.transitions[i].state).norm() == 0.0);
    CHECK(ds.transitions[i].reward == loaded.transitions[i].reward);
    CHECK(ds.transitions[i].terminal == loaded.transitions[i].terminal);
  }
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("corrupted headers fail with the offending line named") {
  const auto tmp = std::filesystem::temp_directory_path();
  const auto path = tmp / "floq_bad_ds.csv";
  {
    std::ofstream out(path);
    out << "# WRONGTAG {}\ns0,a0,r,ns0,terminal\n";
  }
  CHECK_THROWS_WITH_AS((void)load_dataset(path),
                       doctest::Contains("line 1"), ConfigError);
  {
    std::ofstream out(path);
    out << "# FLOQDATA1 {\"env\":\"chain-3\",\"behavior\":\"random\",\"seed\":0,"
           "\"gamma\":0.9,\"state_dim\":1,\"action_dim\":1,\"reward_min\":0.0,"
           "\"reward_max\":1.0,\"num_transitions\":0}\n";
    out << "s0,a0,r,WRONG,terminal\n";
  }
  CHECK_THROWS_WITH_AS((void)load_dataset(path),
                       doctest::Contains("line 2"), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("truncated files are rejected") {
  const Env env = make_env("chain", {{"n", "3"}, {"gamma", "0.9"}});
  const OfflineDataset ds =
      generate_dataset(env, parse_behavior("random"), 10, 2);
  const auto path = std::filesystem::temp_directory_path() / "floq_trunc.csv";
  save_dataset(ds, path);
  // drop the last line
  std::string bytes = file_bytes(path);
  bytes.erase(bytes.rfind('\n', bytes.size() - 2) + 1);
  {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_WITH_AS((void)load_dataset(path), doctest::Contains("truncated"),
                       ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("empty datasets save and reload") {
  const Env env = make_env("chain", {{"n", "3"}, {"gamma", "0.9"}});
  const OfflineDataset ds = generate_dataset(env, parse_behavior("random"), 0, 0);
  CHECK(ds.transitions.empty());
  const auto path = std::filesystem::temp_directory_path() / "floq_empty.csv";
  save_dataset(ds, path);
  const OfflineDataset loaded = load_dataset(path);
  CHECK(loaded.transitions.empty());
  CHECK(loaded.meta.env == "chain-3");
  std::filesystem::remove(path);
}
