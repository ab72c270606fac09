#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "silo/config.hpp"
#include "silo/errors.hpp"
#include "silo/orchestrator.hpp"
#include "support.hpp"

using namespace silo;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_experiment(std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.task.length = 8;
  c.task.nk_k = 1;
  c.task.alphabet = "ABCD";
  c.task.landscape_seed = 4;
  c.task.initial_size = 40;
  auto& r = c.run;
  r.rounds = 2;
  r.budget = 8;
  r.instances = 2;
  r.dmax = {1, 2};
  r.beam = 4;
  r.bestfound = 4;
  r.proxy.ensemble_size = 2;
  r.proxy.channels = 4;
  r.proxy.kernel = 3;
  r.proxy.lr = 3e-3;
  r.proxy.batch_size = 32;
  r.proxy.max_epochs = 10;
  r.policy.dim = 8;
  r.policy.heads = 2;
  r.policy.blocks = 1;
  r.policy.lr = 1e-3;
  r.policy.steps = 5;
  r.policy.batch = 4;
  r.checkpoints = false;
  r.seed = seed;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("silo_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(RandomCandidates, ExactDistanceAndErrors) {
  const Alphabet ab("ABCD", 0);
  const auto x = ab.parse("ABCDABCD");
  for (std::size_t d : {1, 3}) {
    const auto cands = make_random_candidates(x, d, 200, ab, 5);
    ASSERT_EQ(cands.size(), 200u);
    for (const auto& c : cands) EXPECT_EQ(hamming(c, x), d);
  }
  EXPECT_TRUE(make_random_candidates(x, 1, 0, ab, 5).empty());
  EXPECT_THROW(make_random_candidates(x, 9, 1, ab, 5), ConfigError);
  const auto trajs = make_random_trajectories(x, 2, 10, ab, 5);
  for (const auto& t : trajs) EXPECT_EQ(hamming(replay(x, t, ab), x), 2u);
}

TEST(RandomCandidates, PositionsUniform) {
  const Alphabet ab("ABCD", 0);
  const auto x = ab.parse("ABCDABCDAB");
  std::vector<double> counts(10, 0.0);
  for (const auto& c : make_random_candidates(x, 1, 50000, ab, 11)) ++counts[mutated_positions(c, x).at(0)];
  EXPECT_GT(silo::testing::chi_square_p(counts, std::vector<double>(10, 0.1)), 0.01);
}

TEST(Config, ModesParsing) {
  const auto m = parse_modes("no_afs,frozen_policy");
  EXPECT_TRUE(m.no_afs);
  EXPECT_TRUE(m.frozen_policy);
  EXPECT_FALSE(m.random_baseline);
  EXPECT_EQ(format_modes(parse_modes("full")), "full");
  EXPECT_EQ(format_modes(m), "no_afs,frozen_policy");
  EXPECT_THROW(parse_modes("turbo"), ConfigError);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(nlohmann::json{{"roundz", 3}}), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json{{"rounds", "three"}}), ConfigError);
  auto c = tiny_experiment();
  c.run.budget = 1000;
  EXPECT_THROW(validate(c), ConfigError);
  c = tiny_experiment();
  c.run.dmax = {9};
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, JsonRoundTripAndPresets) {
  const auto c = tiny_experiment(7);
  const auto back = parse_config(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  for (const auto& name : preset_names()) EXPECT_NO_THROW(validate(load_config(name)));
  const auto d = load_config("nk_default");
  EXPECT_EQ(d.run.rounds, 10u);
  EXPECT_EQ(d.run.budget, 128u);
  EXPECT_EQ(d.run.instances, 5u);
  EXPECT_EQ(d.run.beam, 32u);
  EXPECT_EQ(d.run.bestfound, 50u);
  EXPECT_EQ(d.run.gamma1, 0.1);
  EXPECT_EQ(d.run.gamma2, 1.0);
  EXPECT_EQ(d.run.policy.lr, 1e-5);
  EXPECT_EQ(d.run.policy.batch, 16u);
  EXPECT_EQ(d.run.proxy.ensemble_size, 3u);
  EXPECT_EQ(d.run.proxy.patience, 10u);
}

TEST(Run, RoundContracts) {
  const auto cfg = tiny_experiment();
  auto task = build_task(cfg.task);
  Orchestrator orch(cfg.run, task);
  double best = argmax_entry(orch.dataset()).fitness;
  std::size_t size = orch.dataset().size();
  for (int n = 1; n <= 2; ++n) {
    const auto rep = orch.run_round();
    EXPECT_EQ(rep.round, n);
    EXPECT_LE(rep.selected.size(), cfg.run.budget);
    EXPECT_LE(rep.bestfound.size(), cfg.run.bestfound);
    EXPECT_LE(rep.sampled, 2u * 2u * 4u);
    EXPECT_EQ(orch.dataset().size(), size + rep.selected.size());
    size = orch.dataset().size();
    std::set<Sequence> evaluated;
    for (const auto& s : rep.selected) {
      evaluated.insert(s.candidate.sequence);
      EXPECT_EQ(s.fitness, task.oracle->fitness(s.candidate.sequence));
    }
    for (const auto& b : rep.bestfound) {
      EXPECT_EQ(evaluated.count(replay(rep.x_start, b.candidate.trajectory, task.alphabet)), 1u);
    }
    for (std::size_t i = 1; i < rep.bestfound.size(); ++i) EXPECT_GE(rep.bestfound[i - 1].fitness, rep.bestfound[i].fitness);
    const double now = argmax_entry(orch.dataset()).fitness;
    EXPECT_GE(now, best);
    best = now;
    EXPECT_EQ(rep.imitation_loss.size(), cfg.run.policy.steps);
  }
  EXPECT_LE(orch.queries_used(), 2u * cfg.run.budget);
  EXPECT_THROW(orch.run_round(), StateError);
}

TEST(Run, FrozenPolicyIsUntouched) {
  auto cfg = tiny_experiment();
  cfg.run.modes.frozen_policy = true;
  auto task = build_task(cfg.task);
  Orchestrator orch(cfg.run, task);
  const auto before = orch.policy().params();
  orch.run_round();
  EXPECT_TRUE(orch.policy().params().same_values(before));
}

TEST(Run, RandomBaseline) {
  auto cfg = tiny_experiment();
  cfg.run.modes.random_baseline = true;
  auto task = build_task(cfg.task);
  Orchestrator orch(cfg.run, task);
  const auto before = orch.policy().params();
  const auto rep = orch.run_round();
  EXPECT_TRUE(orch.policy().params().same_values(before));
  EXPECT_TRUE(rep.imitation_loss.empty());
  EXPECT_FALSE(rep.proxy_val_mse.has_value());
  EXPECT_EQ(rep.selected.size(), cfg.run.budget);
  for (const auto& s : rep.selected) {
    const auto h = hamming(s.candidate.sequence, rep.x_start);
    EXPECT_GE(h, 1u);
    EXPECT_LE(h, 2u);
  }
}

TEST(Run, NoisyProxyKeepsOracleLabelsForImitation) {
  auto cfg = tiny_experiment();
  cfg.run.modes.noisy_proxy = true;
  cfg.run.snr = -5;
  auto task = build_task(cfg.task);
  Orchestrator orch(cfg.run, task);
  const auto rep = orch.run_round();
  EXPECT_FALSE(rep.proxy_val_mse.has_value());
  EXPECT_FALSE(rep.imitation_loss.empty());
  for (const auto& b : rep.bestfound) EXPECT_EQ(b.fitness, task.oracle->fitness(b.candidate.sequence));
}

TEST(Run, ZeroRounds) {
  auto cfg = tiny_experiment();
  cfg.run.rounds = 0;
  const auto dir = fresh_dir("zero_rounds");
  const auto r = run_experiment(cfg, dir);
  EXPECT_TRUE(r.rounds.empty());
  EXPECT_EQ(r.queries, 0u);
  EXPECT_FALSE(r.summary.has_value());
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
}

TEST(Run, DeterministicOutputsAndArtefacts) {
  const auto cfg = tiny_experiment(3);
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  const auto ra = run_experiment(cfg, a);
  run_experiment(cfg, b);
  EXPECT_EQ(slurp(a / "rounds.json"), slurp(b / "rounds.json"));
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
  for (const char* f : {"config.json", "timing.csv", "dataset_round_0.csv", "dataset_round_2.csv", "candidates_round_1.csv",
                        "proxy_round_1.csv"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  EXPECT_LE(ra.queries, cfg.run.rounds * cfg.run.budget);

  const auto again = recompute_summary(a);
  ASSERT_TRUE(again.has_value());
  EXPECT_EQ(summary_to_json(again), summary_to_json(ra.summary));

  // The copied config reproduces the run.
  const auto c = fresh_dir("det_c");
  run_experiment(load_config((a / "config.json").string()), c);
  EXPECT_EQ(slurp(a / "rounds.json"), slurp(c / "rounds.json"));
}

TEST(Run, LowdataFullFractionMatchesPlainRun) {
  auto cfg = tiny_experiment(2);
  cfg.run.rounds = 1;
  const auto plain = fresh_dir("plain");
  run_experiment(cfg, plain);
  cfg.run.modes.lowdata = true;
  cfg.run.lowdata_fraction = 1.0;
  const auto low = fresh_dir("low");
  run_experiment(cfg, low);
  EXPECT_EQ(slurp(plain / "rounds.json"), slurp(low / "rounds.json"));
}

TEST(Run, LowdataShrinksInitialData) {
  auto cfg = tiny_experiment(2);
  cfg.run.modes.lowdata = true;
  cfg.run.lowdata_fraction = 0.5;
  auto task = build_task(cfg.task);
  Orchestrator orch(cfg.run, task);
  EXPECT_EQ(orch.dataset().size(), 20u);
}

TEST(Task, TableLandscapeFromFiles) {
  const auto dir = fresh_dir("table_task");
  fs::create_directories(dir);
  const Alphabet ab("ABCD", 0);
  std::ofstream table(dir / "table.csv"), init(dir / "init.csv");
  table << "sequence,fitness\n";
  init << "sequence,fitness\n";
  std::vector<Sequence> all;
  for (std::size_t code = 0; code < 30; ++code)
    all.emplace_back(std::vector<Residue>{0, static_cast<Residue>(code / 16), static_cast<Residue>((code / 4) % 4), static_cast<Residue>(code % 4)});
  for (std::size_t i = 0; i < all.size(); ++i) {
    table << ab.format(all[i]) << ',' << 0.01 * static_cast<double>(i) << '\n';
    if (i % 3 == 0) init << ab.format(all[i]) << ',' << 0.01 * static_cast<double>(i) << '\n';
  }
  table.close();
  init.close();
  TaskConfig t;
  t.landscape = "table";
  t.alphabet = "ABCD";
  t.table_path = (dir / "table.csv").string();
  t.initial_data_path = (dir / "init.csv").string();
  const auto task = build_task(t);
  EXPECT_EQ(task.initial.size(), 10u);
  EXPECT_EQ(task.wildtype, task.initial[9].sequence);
}
