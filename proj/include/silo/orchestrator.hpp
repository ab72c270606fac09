#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "silo/acquisition.hpp"
#include "silo/config.hpp"
#include "silo/datastore.hpp"
#include "silo/landscape.hpp"
#include "silo/metrics.hpp"
#include "silo/policy.hpp"

namespace silo {

struct Task {
  std::shared_ptr<Oracle> oracle;
  Alphabet alphabet;
  Sequence wildtype;
  LabeledDataset initial;
};

Task build_task(const TaskConfig& cfg);

// Exactly d substitutions at distinct uniformly chosen positions, each to a
// uniformly chosen residue other than the current one. Throws ConfigError
// when d > L.
std::vector<Trajectory> make_random_trajectories(const Sequence& x_start, std::size_t d, std::size_t count,
                                                 const Alphabet& alphabet, std::uint64_t seed);
std::vector<Sequence> make_random_candidates(const Sequence& x_start, std::size_t d, std::size_t count,
                                             const Alphabet& alphabet, std::uint64_t seed);

struct EvaluatedCandidate {
  ScoredCandidate candidate;
  double fitness = 0.0;
};

struct RoundReport {
  int round = 0;
  Sequence x_start;
  double x_start_fitness = 0.0;
  std::size_t sampled = 0;
  std::size_t unique_candidates = 0;
  std::vector<EvaluatedCandidate> selected;
  std::vector<EvaluatedCandidate> bestfound;
  std::vector<double> imitation_loss;
  std::optional<double> proxy_val_mse;
  std::optional<Summary> metrics;
  bool budget_truncated = false;
  bool sampler_exhausted = false;
  std::uint64_t queries = 0;  // cumulative for the run
  double wall_seconds = 0.0;  // reported in timing.csv only
};

// Algorithm state for one run. Per-round artefacts go to out_dir when set.
class Orchestrator {
 public:
  Orchestrator(RunConfig cfg, Task& task, std::optional<std::filesystem::path> out_dir = {});

  // One active-learning round. Throws StateError past the last round.
  RoundReport run_round();

  const LabeledDataset& dataset() const { return dataset_; }
  const PolicyModel& policy() const { return policy_; }
  const Sequence& initial_x_start() const { return initial_x_start_; }
  std::uint64_t queries_used() const;
  int rounds_done() const { return round_; }

 private:
  std::vector<Candidate> sample_candidates(const Sequence& x_start, bool& exhausted, std::size_t& sampled);

  RunConfig cfg_;
  Task& task_;
  std::optional<std::filesystem::path> out_dir_;
  LabeledDataset dataset_;
  PolicyModel policy_;
  std::unique_ptr<Scorer> noisy_;
  Sequence initial_x_start_;
  std::uint64_t start_queries_ = 0;
  int round_ = 0;
};

struct RunResult {
  std::vector<RoundReport> rounds;
  LabeledDataset dataset;
  Sequence initial_x_start;
  std::optional<Summary> summary;
  std::uint64_t queries = 0;
};

// N rounds; writes rounds.json, summary.json and timing.csv when out_dir is set.
RunResult run(const RunConfig& cfg, Task& task, std::optional<std::filesystem::path> out_dir = {});
// Builds the task, copies the config to out_dir/config.json and runs.
RunResult run_experiment(const ExperimentConfig& cfg, std::optional<std::filesystem::path> out_dir = {});

nlohmann::json rounds_to_json(const RunResult& r, const RunConfig& cfg, const Alphabet& alphabet);
nlohmann::json summary_to_json(const std::optional<Summary>& s);
// Recomputes the summary from a run directory's rounds.json.
std::optional<Summary> recompute_summary(const std::filesystem::path& run_dir);

}  // namespace silo
