#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "silo/policy.hpp"
#include "silo/proxy.hpp"

namespace silo {

// Ablation and stress switches; all false is the full method.
struct Modes {
  bool random_baseline = false;
  bool bs_instead_of_sbs = false;
  bool no_afs = false;
  bool frozen_policy = false;
  bool noisy_proxy = false;
  bool lowdata = false;
};

// "full" or a comma list of mode names. Throws ConfigError.
Modes parse_modes(std::string_view list);
std::string format_modes(const Modes& m);

struct RunConfig {
  std::size_t rounds = 10;      // N
  std::size_t budget = 128;     // K oracle queries per round
  std::size_t instances = 5;    // M
  std::vector<std::size_t> dmax{1, 2, 3};
  std::size_t beam = 32;        // beta
  std::size_t bestfound = 50;   // P
  double gamma1 = 0.1;
  double gamma2 = 1.0;
  ProxyConfig proxy;
  PolicyConfig policy;
  Modes modes;
  double snr = -15.0;             // noisy_proxy only
  double lowdata_fraction = 1.0;  // lowdata only
  std::uint64_t seed = 0;
  std::size_t top_r = 100;
  std::size_t median_r = 50;
  bool checkpoints = true;
  bool sbs_trace = false;
};

// Problem instance: landscape plus initial labelled data. Fixed by
// landscape_seed so different master seeds and modes share the same task.
struct TaskConfig {
  std::string landscape = "nk";  // nk | table
  std::size_t length = 20;
  std::size_t nk_k = 2;
  std::string alphabet = "ACDEFGHIKLMNPQRSTVWY";
  std::size_t neutral = 0;
  std::uint64_t landscape_seed = 0;
  std::string wildtype;  // empty: drawn from landscape_seed
  std::vector<std::size_t> critical_positions;
  double critical_penalty = 0.2;
  std::string table_path;
  std::string initial_data_path;
  std::size_t initial_size = 200;
  std::size_t initial_min_radius = 1;
  std::size_t initial_max_radius = 3;
};

struct ExperimentConfig {
  TaskConfig task;
  RunConfig run;
};

// Throws ConfigError naming the offending field. Relative paths in the
// config are resolved against base_dir.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

// A path to a JSON file, or the name of a built-in preset.
ExperimentConfig load_config(const std::string& path_or_preset);
std::vector<std::string> preset_names();

}  // namespace silo
