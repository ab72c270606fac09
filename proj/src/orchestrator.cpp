#include "silo/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "silo/errors.hpp"
#include "silo/log.hpp"
#include "silo/parallel.hpp"
#include "silo/proxy.hpp"
#include "silo/rng.hpp"
#include "silo/sampler.hpp"

namespace silo {

using nlohmann::json;
namespace fs = std::filesystem;

Task build_task(const TaskConfig& cfg) {
  Alphabet alphabet(cfg.alphabet, cfg.neutral);
  if (cfg.landscape == "table") {
    auto oracle = std::make_shared<TableOracle>(load_fitness_table(cfg.table_path, alphabet));
    auto initial = load_dataset_csv(cfg.initial_data_path, alphabet);
    if (initial.empty()) throw ConfigError("initial data is empty: " + cfg.initial_data_path);
    for (const auto& e : initial.entries())
      if (e.sequence.size() != oracle->length()) throw ConfigError("initial data length differs from the table");
    auto wildtype = argmax_start(initial);
    return {oracle, alphabet, wildtype, std::move(initial)};
  }
  if (cfg.landscape != "nk") throw ConfigError("unknown landscape '" + cfg.landscape + "'");
  auto base = std::make_shared<NkLandscape>(cfg.length, cfg.nk_k, alphabet.size(), cfg.landscape_seed);
  Sequence wildtype;
  if (!cfg.wildtype.empty()) {
    wildtype = alphabet.parse(cfg.wildtype);
  } else {
    Rng rng(derive_seed(cfg.landscape_seed, "wildtype"));
    std::vector<Residue> r(cfg.length);
    for (auto& v : r) v = static_cast<Residue>(rng.below(alphabet.size()));
    wildtype = Sequence(std::move(r));
  }
  std::shared_ptr<Oracle> oracle = base;
  if (!cfg.critical_positions.empty())
    oracle = std::make_shared<CriticalPositionsLandscape>(base, wildtype, cfg.critical_positions, alphabet.neutral(),
                                                          cfg.critical_penalty);
  LabeledDataset initial;
  if (cfg.initial_data_path.empty()) {
    initial = make_initial_dataset(*oracle, wildtype, alphabet, cfg.initial_size, cfg.initial_min_radius,
                                   cfg.initial_max_radius, derive_seed(cfg.landscape_seed, "initial"));
  } else {
    initial = load_dataset_csv(cfg.initial_data_path, alphabet);
    for (const auto& e : initial.entries())
      if (e.sequence.size() != cfg.length) throw ConfigError("initial data length differs from 'length'");
  }
  return {oracle, alphabet, wildtype, std::move(initial)};
}

std::vector<Trajectory> make_random_trajectories(const Sequence& x_start, std::size_t d, std::size_t count,
                                                 const Alphabet& alphabet, std::uint64_t seed) {
  const auto L = x_start.size();
  if (d > L) throw ConfigError("random candidates: d exceeds the sequence length");
  Rng rng(seed);
  std::vector<Trajectory> out;
  out.reserve(count);
  std::vector<std::size_t> positions(L);
  for (std::size_t c = 0; c < count; ++c) {
    std::iota(positions.begin(), positions.end(), 0);
    std::vector<EditAction> actions;
    for (std::size_t i = 0; i < d; ++i) {
      std::swap(positions[i], positions[i + rng.below(L - i)]);
      const auto pos = positions[i];
      auto r = static_cast<Residue>(rng.below(alphabet.size() - 1));
      if (r >= x_start[pos]) ++r;
      actions.push_back({pos, r});
    }
    out.push_back(make_trajectory(x_start, std::move(actions)));
  }
  return out;
}

std::vector<Sequence> make_random_candidates(const Sequence& x_start, std::size_t d, std::size_t count,
                                             const Alphabet& alphabet, std::uint64_t seed) {
  std::vector<Sequence> out;
  for (const auto& t : make_random_trajectories(x_start, d, count, alphabet, seed))
    out.push_back(replay(x_start, t, alphabet));
  return out;
}

namespace {

json actions_json(const Trajectory& t, const Alphabet& alphabet) {
  json a = json::array();
  for (const auto& act : t.actions) a.push_back(json::array({act.position, std::string(1, alphabet.symbol(act.residue))}));
  return a;
}

json summary_fields(const Summary& s) {
  return json{{"max_fitness", s.max_fitness},
              {"mean_top100", s.mean_top100},
              {"novelty_top100", s.novelty_top100},
              {"diversity_top100", s.diversity_top100},
              {"median_top50", s.median_top50}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_curve_csv(const fs::path& path, const std::vector<ProxyCurveRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "epoch,member,train_mse,val_mse\n";
  for (const auto& r : rows) out << r.epoch << ',' << r.member << ',' << r.train_mse << ',' << r.val_mse << '\n';
}

}  // namespace

Orchestrator::Orchestrator(RunConfig cfg, Task& task, std::optional<fs::path> out_dir)
    : cfg_(std::move(cfg)),
      task_(task),
      out_dir_(std::move(out_dir)),
      dataset_(task.initial),
      policy_(task.oracle->length(), task.alphabet, cfg_.policy, derive_seed(cfg_.seed, "policy_init")) {
  if (dataset_.empty()) throw StateError("initial dataset is empty");
  for (auto d : cfg_.dmax)
    if (d < 1 || d > task_.oracle->length()) throw ConfigError("dmax entries must lie in [1, L]");
  if (cfg_.instances * cfg_.dmax.size() * cfg_.beam < cfg_.budget)
    throw ConfigError("instances x |dmax| x beam must be >= budget");
  if (cfg_.modes.lowdata) dataset_ = subsample(dataset_, cfg_.lowdata_fraction, derive_seed(cfg_.seed, "subsample"));
  if (cfg_.modes.noisy_proxy) {
    NoisySpec spec{cfg_.snr, fitness_variance(dataset_), cfg_.proxy.ensemble_size, derive_seed(cfg_.seed, "noise")};
    noisy_ = std::make_unique<NoisyProxy>(task_.oracle, spec);
  }
  initial_x_start_ = argmax_start(dataset_);
  start_queries_ = task_.oracle->queries();
  if (out_dir_) {
    fs::create_directories(*out_dir_);
    write_dataset_csv(*out_dir_ / "dataset_round_0.csv", dataset_, task_.alphabet);
  }
}

std::uint64_t Orchestrator::queries_used() const { return task_.oracle->queries() - start_queries_; }

std::vector<Candidate> Orchestrator::sample_candidates(const Sequence& x_start, bool& exhausted, std::size_t& sampled) {
  const auto n = static_cast<std::uint64_t>(round_ + 1);
  const auto D = cfg_.dmax.size();
  const auto jobs = cfg_.instances * D;
  std::vector<SampleBatch> batches(jobs);
  parallel_for(jobs, [&](std::size_t job) {
    const std::uint64_t m = job / D;
    const std::size_t d = cfg_.dmax[job % D];
    if (cfg_.modes.random_baseline) {
      for (auto& t : make_random_trajectories(x_start, d, cfg_.beam, task_.alphabet,
                                              derive_seed(cfg_.seed, "random_cands", {n, m, d})))
        batches[job].items.push_back({std::move(t), 0.0, 0.0});
      return;
    }
    SearchTree tree(x_start, d);
    PolicyTransition model(policy_, x_start);
    batches[job] = cfg_.modes.bs_instead_of_sbs
                       ? beam_search(tree, model, cfg_.beam)
                       : sbs_sample(tree, model, cfg_.beam, derive_seed(cfg_.seed, "sampler", {n, m, d}));
  });

  std::ofstream trace;
  if (out_dir_ && cfg_.sbs_trace && !cfg_.modes.random_baseline) {
    trace.open(*out_dir_ / ("sbs_trace_round_" + std::to_string(n) + ".jsonl"));
    if (!trace) throw Error("cannot write the sampler trace");
  }
  std::vector<Candidate> out;
  exhausted = false;
  sampled = 0;
  for (std::size_t job = 0; job < jobs; ++job) {
    exhausted = exhausted || batches[job].exhausted;
    for (auto& item : batches[job].items) {
      ++sampled;
      if (trace.is_open())
        trace << json{{"round", n},
                      {"instance", job / D},
                      {"d", cfg_.dmax[job % D]},
                      {"actions", actions_json(item.trajectory, task_.alphabet)},
                      {"logprob", item.logprob},
                      {"perturbed", item.perturbed}}
                     .dump()
              << '\n';
      auto seq = replay(x_start, item.trajectory, task_.alphabet);
      out.push_back({std::move(seq), std::move(item.trajectory)});
    }
  }
  return out;
}

RoundReport Orchestrator::run_round() {
  if (round_ >= static_cast<int>(cfg_.rounds)) throw StateError("all configured rounds have run");
  const auto started = std::chrono::steady_clock::now();
  const int n = round_ + 1;
  const auto un = static_cast<std::uint64_t>(n);
  const auto& alphabet = task_.alphabet;
  const auto tag = "_round_" + std::to_string(n);
  RoundReport rep;
  rep.round = n;

  // (1) scorer
  std::optional<ProxyEnsemble> proxy;
  const Scorer* scorer = nullptr;
  if (!cfg_.modes.random_baseline) {
    if (noisy_) {
      scorer = noisy_.get();
    } else {
      std::vector<ProxyCurveRow> curve;
      proxy.emplace(ProxyEnsemble::train(dataset_, cfg_.proxy, derive_seed(cfg_.seed, "proxy", {un}), alphabet.size(),
                                         &curve));
      scorer = &*proxy;
      rep.proxy_val_mse = proxy->validation_mse();
      if (out_dir_) {
        write_curve_csv(*out_dir_ / ("proxy" + tag + ".csv"), curve);
        if (cfg_.checkpoints) proxy->save(*out_dir_ / ("proxy_model" + tag));
      }
    }
  }

  // (2) anchor
  const auto& best = argmax_entry(dataset_);
  rep.x_start = best.sequence;
  rep.x_start_fitness = best.fitness;

  // (3) sample, dropping repeats and already labelled sequences
  auto sampled = sample_candidates(rep.x_start, rep.sampler_exhausted, rep.sampled);
  if (rep.sampler_exhausted) log::warn("round " + std::to_string(n) + ": sampler returned fewer trajectories than the beam");
  std::set<Sequence> known;
  for (const auto& e : dataset_.entries()) known.insert(e.sequence);
  std::vector<Candidate> cands;
  for (auto& c : sampled)
    if (known.insert(c.sequence).second) cands.push_back(std::move(c));
  rep.unique_candidates = cands.size();

  // (4) + (5) score and select
  std::vector<ScoredCandidate> scored, selected;
  if (cfg_.modes.random_baseline) {
    for (std::size_t i = 0; i < cands.size(); ++i) {
      ScoredCandidate s;
      s.sequence = cands[i].sequence;
      s.trajectory = cands[i].trajectory;
      s.index = i;
      scored.push_back(std::move(s));
    }
    selected = scored;
    Rng rng(derive_seed(cfg_.seed, "random_select", {un}));
    for (std::size_t i = selected.size(); i-- > 1;) std::swap(selected[i], selected[rng.below(i + 1)]);
    if (selected.size() > cfg_.budget) selected.resize(cfg_.budget);
  } else {
    scored = score_candidates(cands, *scorer, rep.x_start, alphabet, cfg_.gamma1, cfg_.gamma2, !cfg_.modes.no_afs);
    if (!scored.empty()) selected = select_topk_unique(scored, cfg_.budget);
  }

  // (6) oracle evaluation within the run budget
  const std::uint64_t total_budget = static_cast<std::uint64_t>(cfg_.rounds) * cfg_.budget;
  const auto remaining = total_budget - std::min(total_budget, queries_used());
  if (selected.size() > remaining) {
    selected.resize(remaining);
    rep.budget_truncated = true;
    log::warn("round " + std::to_string(n) + ": oracle budget exhausted, batch truncated");
  }
  std::vector<std::pair<Sequence, double>> labelled;
  for (auto& s : selected) {
    const double f = task_.oracle->evaluate(s.sequence);
    labelled.emplace_back(s.sequence, f);
    rep.selected.push_back({std::move(s), f});
  }
  dataset_ = append_batch(std::move(dataset_), std::move(labelled), n);

  // (7) BESTFOUND from this round's evaluations
  std::vector<std::size_t> order(rep.selected.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rep.selected[a].fitness > rep.selected[b].fitness; });
  for (std::size_t i = 0; i < std::min(cfg_.bestfound, order.size()); ++i) rep.bestfound.push_back(rep.selected[order[i]]);

  // (8) imitation
  if (!cfg_.modes.frozen_policy && !cfg_.modes.random_baseline && !rep.bestfound.empty()) {
    std::vector<Demonstration> demos;
    for (const auto& b : rep.bestfound) demos.push_back({rep.x_start, b.candidate.trajectory});
    rep.imitation_loss = imitation_update(policy_, demos, cfg_.policy.steps, cfg_.policy.batch, cfg_.policy.lr,
                                          derive_seed(cfg_.seed, "imitation", {un}));
  }

  if (std::any_of(dataset_.entries().begin(), dataset_.entries().end(), [](const auto& e) { return e.round > 0; }))
    rep.metrics = summarize(dataset_, initial_x_start_, cfg_.top_r, cfg_.median_r);
  rep.queries = queries_used();

  if (out_dir_) {
    write_dataset_csv(*out_dir_ / ("dataset" + tag + ".csv"), dataset_, alphabet);
    std::vector<ScoredCandidate> chosen;
    for (const auto& s : rep.selected) chosen.push_back(s.candidate);
    write_candidates_csv(*out_dir_ / ("candidates" + tag + ".csv"), scored, chosen, alphabet);
    if (cfg_.checkpoints) policy_.save(*out_dir_ / ("policy" + tag));
  }
  round_ = n;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

json summary_to_json(const std::optional<Summary>& s) {
  if (s) return summary_fields(*s);
  return json{{"max_fitness", nullptr},
              {"mean_top100", nullptr},
              {"novelty_top100", nullptr},
              {"diversity_top100", nullptr},
              {"median_top50", nullptr}};
}

json rounds_to_json(const RunResult& r, const RunConfig& cfg, const Alphabet& alphabet) {
  json rounds = json::array();
  for (const auto& rep : r.rounds) {
    json selected = json::array(), bestfound = json::array();
    for (const auto& s : rep.selected) {
      const auto& c = s.candidate;
      selected.push_back(json{{"sequence", alphabet.format(c.sequence)},
                              {"actions", actions_json(c.trajectory, alphabet)},
                              {"logprob", c.trajectory.logprob},
                              {"score", c.score},
                              {"mu", c.mu},
                              {"sigma", c.sigma},
                              {"mu_afs", c.mu_afs},
                              {"sigma_afs", c.sigma_afs},
                              {"fitness", s.fitness}});
    }
    for (const auto& b : rep.bestfound)
      bestfound.push_back(json{{"sequence", alphabet.format(b.candidate.sequence)},
                               {"actions", actions_json(b.candidate.trajectory, alphabet)},
                               {"fitness", b.fitness}});
    rounds.push_back(json{{"round", rep.round},
                          {"x_start", alphabet.format(rep.x_start)},
                          {"x_start_fitness", rep.x_start_fitness},
                          {"sampled", rep.sampled},
                          {"unique_candidates", rep.unique_candidates},
                          {"evaluated", rep.selected.size()},
                          {"budget_truncated", rep.budget_truncated},
                          {"sampler_exhausted", rep.sampler_exhausted},
                          {"queries", rep.queries},
                          {"proxy_val_mse", rep.proxy_val_mse ? json(*rep.proxy_val_mse) : json(nullptr)},
                          {"imitation_loss", rep.imitation_loss},
                          {"metrics", rep.metrics ? summary_fields(*rep.metrics) : json(nullptr)},
                          {"selected", std::move(selected)},
                          {"bestfound", std::move(bestfound)}});
  }
  return json{{"alphabet", alphabet.symbols()},
              {"initial_x_start", alphabet.format(r.initial_x_start)},
              {"top_r", cfg.top_r},
              {"median_r", cfg.median_r},
              {"queries", r.queries},
              {"rounds", std::move(rounds)}};
}

RunResult run(const RunConfig& cfg, Task& task, std::optional<fs::path> out_dir) {
  Orchestrator orch(cfg, task, out_dir);
  RunResult result;
  for (std::size_t i = 0; i < cfg.rounds; ++i) {
    try {
      result.rounds.push_back(orch.run_round());
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw Error("round " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  result.dataset = orch.dataset();
  result.initial_x_start = orch.initial_x_start();
  result.queries = orch.queries_used();
  if (!result.rounds.empty()) result.summary = result.rounds.back().metrics;
  if (out_dir) {
    write_text(*out_dir / "rounds.json", rounds_to_json(result, cfg, task.alphabet).dump(2) + "\n");
    write_text(*out_dir / "summary.json", summary_to_json(result.summary).dump(2) + "\n");
    std::ofstream timing(*out_dir / "timing.csv");
    timing << "round,wall_seconds\n";
    for (const auto& rep : result.rounds) timing << rep.round << ',' << rep.wall_seconds << '\n';
  }
  return result;
}

RunResult run_experiment(const ExperimentConfig& cfg, std::optional<fs::path> out_dir) {
  validate(cfg);
  auto task = build_task(cfg.task);
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_text(*out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  }
  return run(cfg.run, task, out_dir);
}

std::optional<Summary> recompute_summary(const fs::path& run_dir) {
  std::ifstream in(run_dir / "rounds.json");
  if (!in) throw Error("cannot read " + (run_dir / "rounds.json").string());
  json j;
  try {
    j = json::parse(in);
    const Alphabet alphabet(j.at("alphabet").get<std::string>(), 0);
    const auto x_start = alphabet.parse(j.at("initial_x_start").get<std::string>());
    std::vector<LabeledEntry> entries;
    for (const auto& round : j.at("rounds"))
      for (const auto& s : round.at("selected"))
        entries.push_back({alphabet.parse(s.at("sequence").get<std::string>()), s.at("fitness").get<double>(),
                           round.at("round").get<int>()});
    if (entries.empty()) return std::nullopt;
    return summarize(LabeledDataset(std::move(entries)), x_start, j.at("top_r").get<std::size_t>(),
                     j.at("median_r").get<std::size_t>());
  } catch (const json::exception& e) {
    throw ParseError((run_dir / "rounds.json").string() + ": " + e.what());
  }
}

}  // namespace silo
