// silo_cli: run, ablate and stress-test the active-learning loop.
//
//   silo_cli run --config nk_small --seed 1 --out runs/demo
//   silo_cli ablate --config nk_small --seed 1 2 3 --out runs/ablation
//   silo_cli stress noise --config nk_small --levels -25 -15 -5 --out runs/noise
//   silo_cli metrics runs/demo

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "silo/config.hpp"
#include "silo/errors.hpp"
#include "silo/log.hpp"
#include "silo/orchestrator.hpp"

namespace fs = std::filesystem;

namespace {

struct Variant {
  std::string name;
  std::string modes;
};

const std::vector<Variant>& ablation_grid() {
  static const std::vector<Variant> grid{
      {"random", "random_baseline"},
      {"bs_no_afs", "bs_instead_of_sbs,no_afs"},
      {"bs_afs", "bs_instead_of_sbs"},
      {"sbs_no_afs", "no_afs"},
      {"frozen_bs", "frozen_policy,bs_instead_of_sbs"},
      {"frozen_sbs", "frozen_policy"},
      {"silo", "full"},
  };
  return grid;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(std::numeric_limits<double>::max_digits10);
  ss << v;
  return ss.str();
}

std::string metric_columns(const std::optional<silo::Summary>& s) {
  if (!s) return ",,,,";
  return format_double(s->max_fitness) + ',' + format_double(s->mean_top100) + ',' + format_double(s->novelty_top100) +
         ',' + format_double(s->diversity_top100) + ',' + format_double(s->median_top50);
}

// Merges a mode list into the config's own modes; keeps stress switches.
silo::Modes merge_modes(const silo::Modes& base, const silo::Modes& extra) {
  silo::Modes m = base;
  m.random_baseline |= extra.random_baseline;
  m.bs_instead_of_sbs |= extra.bs_instead_of_sbs;
  m.no_afs |= extra.no_afs;
  m.frozen_policy |= extra.frozen_policy;
  m.noisy_proxy |= extra.noisy_proxy;
  m.lowdata |= extra.lowdata;
  return m;
}

std::vector<std::uint64_t> seeds_or_default(const std::vector<std::uint64_t>& seeds, const silo::ExperimentConfig& cfg) {
  return seeds.empty() ? std::vector<std::uint64_t>{cfg.run.seed} : seeds;
}

std::string level_name(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oracle-budgeted sequence optimisation with a self-imitating edit policy"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  std::string config = "nk_default", mode;
  // One target per subcommand: default_val writes through immediately.
  std::string run_out, ablate_out, stress_out, summary_out;
  std::vector<std::uint64_t> seeds;
  std::vector<double> levels;

  auto* run_cmd = app.add_subcommand("run", "Run the loop once");
  run_cmd->add_option("--config", config, "Config file or preset (" + std::string("nk_default, nk_small, critical") + ")");
  run_cmd->add_option("--out", run_out, "Run directory")->default_val("silo_run");
  run_cmd->add_option("--seed", seeds, "Master seed")->expected(1);
  run_cmd->add_option("--mode", mode, "Comma list: full, random_baseline, bs_instead_of_sbs, no_afs, frozen_policy, noisy_proxy, lowdata");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation grid");
  ablate_cmd->add_option("--config", config, "Config file or preset");
  ablate_cmd->add_option("--out", ablate_out, "Output directory")->default_val("silo_ablation");
  ablate_cmd->add_option("--seed", seeds, "Master seeds");
  ablate_cmd->add_option("--mode", mode, "Single variant: random, bs_no_afs, bs_afs, sbs_no_afs, frozen_bs, frozen_sbs, silo");

  std::string kind;
  auto* stress_cmd = app.add_subcommand("stress", "Sweep low-data fractions or proxy noise levels");
  stress_cmd->add_option("kind", kind, "lowdata | noise")->required()->check(CLI::IsMember({"lowdata", "noise"}));
  stress_cmd->add_option("--config", config, "Config file or preset");
  stress_cmd->add_option("--out", stress_out, "Output directory")->default_val("silo_stress");
  stress_cmd->add_option("--seed", seeds, "Master seeds");
  stress_cmd->add_option("--levels", levels, "Fractions (lowdata) or SNR in dB (noise)");
  stress_cmd->add_option("--mode", mode, "Extra modes applied to every level");

  std::string run_dir;
  auto* metrics_cmd = app.add_subcommand("metrics", "Recompute the summary of a run directory");
  metrics_cmd->add_option("run_dir", run_dir, "Run directory")->required();
  metrics_cmd->add_option("--out", summary_out, "Write the summary JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  silo::log::set_level(quiet ? silo::log::Level::quiet : verbose ? silo::log::Level::info : silo::log::Level::warn);

  try {
    if (*metrics_cmd) {
      const auto summary = silo::recompute_summary(run_dir);
      const auto text = silo::summary_to_json(summary).dump(2) + "\n";
      if (summary_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream(summary_out) << text;
      }
      return 0;
    }

    auto cfg = silo::load_config(config);

    if (*run_cmd) {
      if (!seeds.empty()) cfg.run.seed = seeds.front();
      if (!mode.empty()) cfg.run.modes = silo::parse_modes(mode);
      silo::validate(cfg);
      const auto result = silo::run_experiment(cfg, fs::path(run_out));
      std::cout << "run " << run_out << " rounds=" << result.rounds.size() << " queries=" << result.queries;
      if (result.summary) std::cout << " max_fitness=" << format_double(result.summary->max_fitness);
      std::cout << '\n';
      return 0;
    }

    if (*ablate_cmd) {
      std::vector<Variant> variants;
      for (const auto& v : ablation_grid())
        if (mode.empty() || v.name == mode) variants.push_back(v);
      if (variants.empty()) throw silo::ConfigError("--mode: unknown ablation variant '" + mode + "'");
      fs::create_directories(ablate_out);
      std::ofstream csv(fs::path(ablate_out) / "ablation.csv");
      csv << "variant,seed,max_fitness,mean_top100,novelty_top100,diversity_top100,median_top50,queries\n";
      for (auto seed : seeds_or_default(seeds, cfg)) {
        for (const auto& v : variants) {
          auto c = cfg;
          c.run.seed = seed;
          c.run.modes = merge_modes(silo::Modes{}, silo::parse_modes(v.modes));
          c.run.modes.noisy_proxy = cfg.run.modes.noisy_proxy;
          c.run.modes.lowdata = cfg.run.modes.lowdata;
          silo::validate(c);
          const auto dir = fs::path(ablate_out) / v.name / ("seed_" + std::to_string(seed));
          const auto result = silo::run_experiment(c, dir);
          csv << v.name << ',' << seed << ',' << metric_columns(result.summary) << ',' << result.queries << '\n';
          csv.flush();
          std::cout << v.name << " seed=" << seed << ' '
                    << (result.summary ? "max_fitness=" + format_double(result.summary->max_fitness) : "no rounds")
                    << '\n';
        }
      }
      return 0;
    }

    if (*stress_cmd) {
      if (levels.empty()) levels = kind == "lowdata" ? std::vector<double>{0.1, 0.2, 0.5} : std::vector<double>{-25, -15, -5};
      fs::create_directories(stress_out);
      std::ofstream csv(fs::path(stress_out) / "stress.csv");
      csv << "kind,level,seed,max_fitness,mean_top100,novelty_top100,diversity_top100,median_top50,queries\n";
      const auto extra = mode.empty() ? silo::Modes{} : silo::parse_modes(mode);
      for (auto seed : seeds_or_default(seeds, cfg)) {
        for (double level : levels) {
          auto c = cfg;
          c.run.seed = seed;
          c.run.modes = merge_modes(cfg.run.modes, extra);
          if (kind == "lowdata") {
            c.run.modes.lowdata = true;
            c.run.lowdata_fraction = level;
          } else {
            c.run.modes.noisy_proxy = true;
            c.run.snr = level;
          }
          silo::validate(c);
          const auto dir = fs::path(stress_out) / (kind + "_" + level_name(level)) / ("seed_" + std::to_string(seed));
          const auto result = silo::run_experiment(c, dir);
          csv << kind << ',' << format_double(level) << ',' << seed << ',' << metric_columns(result.summary) << ','
              << result.queries << '\n';
          csv.flush();
          std::cout << kind << ' ' << level << " seed=" << seed << ' '
                    << (result.summary ? "max_fitness=" + format_double(result.summary->max_fitness) : "no rounds")
                    << '\n';
        }
      }
      return 0;
    }
  } catch (const silo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
