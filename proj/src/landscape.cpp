#include "silo/landscape.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "silo/errors.hpp"
#include "silo/rng.hpp"

namespace silo {

void Oracle::check_length(const Sequence& x) const {
  if (x.size() != length())
    throw DimensionError("oracle expects length " + std::to_string(length()) + ", got " + std::to_string(x.size()));
}

NkLandscape::NkLandscape(std::size_t length, std::size_t k, std::size_t alphabet_size, std::uint64_t seed)
    : length_(length), k_(k), alphabet_size_(alphabet_size) {
  if (length == 0) throw ConfigError("NK landscape needs L >= 1");
  if (k >= length) throw ConfigError("NK landscape needs k < L (k=" + std::to_string(k) + ", L=" + std::to_string(length) + ")");
  if (alphabet_size < 2) throw ConfigError("NK landscape needs |V| >= 2");
  const double entries = std::pow(static_cast<double>(alphabet_size), static_cast<double>(k + 1));
  if (entries > static_cast<double>(1u << 24)) throw ConfigError("NK contribution table too large; lower k or |V|");

  Rng rng(derive_seed(seed, "nk"));
  neighbors_.resize(length);
  tables_.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < length; ++j)
      if (j != i) others.push_back(j);
    // Partial Fisher-Yates: first k entries are a uniform draw without replacement.
    for (std::size_t j = 0; j < k; ++j) std::swap(others[j], others[j + rng.below(others.size() - j)]);
    neighbors_[i].assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k));
  }
  for (std::size_t i = 0; i < length; ++i) {
    tables_[i].resize(static_cast<std::size_t>(entries));
    for (double& v : tables_[i]) v = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
  }
}

double NkLandscape::contribution(std::size_t i, const Sequence& x) const {
  std::size_t idx = x[i];
  for (std::size_t j : neighbors_[i]) idx = idx * alphabet_size_ + x[j];
  return tables_[i][idx];
}

double NkLandscape::fitness(const Sequence& x) const {
  check_length(x);
  for (Residue r : x.residues())
    if (r >= alphabet_size_) throw BoundsError("residue outside NK alphabet");
  double sum = 0.0;
  for (std::size_t i = 0; i < length_; ++i) sum += contribution(i, x);
  return sum / static_cast<double>(length_);
}

void NkLandscape::fill_tables(double value) {
  for (auto& t : tables_) std::fill(t.begin(), t.end(), value);
}

NkLandscape make_nk(std::size_t length, std::size_t k, const Alphabet& alphabet, std::uint64_t seed) {
  return NkLandscape(length, k, alphabet.size(), seed);
}

CriticalPositionsLandscape::CriticalPositionsLandscape(std::shared_ptr<const Oracle> base, Sequence wildtype,
                                                       std::vector<std::size_t> critical, Residue neutral,
                                                       double penalty)
    : base_(std::move(base)), wildtype_(std::move(wildtype)), critical_(std::move(critical)),
      neutral_(neutral), penalty_(penalty) {
  if (wildtype_.size() != base_->length()) throw DimensionError("critical landscape: wildtype length mismatch");
  for (std::size_t c : critical_)
    if (c >= wildtype_.size()) throw ConfigError("critical position " + std::to_string(c) + " outside sequence");
  if (penalty_ < 0.0) throw ConfigError("critical penalty must be >= 0");
}

bool CriticalPositionsLandscape::touches_critical(const Sequence& x) const {
  return std::any_of(critical_.begin(), critical_.end(),
                     [&](std::size_t c) { return x[c] != wildtype_[c] && x[c] != neutral_; });
}

double CriticalPositionsLandscape::fitness(const Sequence& x) const {
  check_length(x);
  double f = base_->fitness(x);
  for (std::size_t c : critical_)
    if (x[c] != wildtype_[c] && x[c] != neutral_) f *= penalty_;
  return f;
}

TableOracle::TableOracle(std::map<Sequence, double> table) : table_(std::move(table)) {
  if (table_.empty()) throw ConfigError("table oracle needs at least one entry");
  length_ = table_.begin()->first.size();
  for (const auto& [seq, _] : table_)
    if (seq.size() != length_) throw DimensionError("table oracle rows have differing lengths");
}

double TableOracle::fitness(const Sequence& x) const {
  check_length(x);
  auto it = table_.find(x);
  if (it == table_.end()) throw CoverageError("table oracle has no entry for the queried sequence");
  return it->second;
}

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<FitnessRow> read_fitness_csv(const std::filesystem::path& path, const Alphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  ++lineno;
  const auto header = split_commas(trim(line));
  const bool with_round = header.size() == 3 && header[2] == "round";
  if (header.size() < 2 || header[0] != "sequence" || header[1] != "fitness" || (header.size() == 3 && !with_round) ||
      header.size() > 3)
    throw ParseError(path.string() + ":1: expected header 'sequence,fitness'");

  std::vector<FitnessRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cells.size() != header.size()) throw ParseError(where + "expected " + std::to_string(header.size()) + " columns");
    FitnessRow row;
    row.line = lineno;
    try {
      row.sequence = alphabet.parse(cells[0]);
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    }
    if (row.sequence.empty()) throw ParseError(where + "empty sequence");
    std::size_t used = 0;
    try {
      row.fitness = std::stod(cells[1], &used);
    } catch (const std::exception&) {
      throw ParseError(where + "fitness '" + cells[1] + "' is not a number");
    }
    if (used != cells[1].size() || !std::isfinite(row.fitness))
      throw ParseError(where + "fitness '" + cells[1] + "' is not a finite number");
    if (with_round) {
      try {
        row.round = std::stoi(cells[2], &used);
      } catch (const std::exception&) {
        throw ParseError(where + "round '" + cells[2] + "' is not an integer");
      }
      if (used != cells[2].size() || *row.round < 0) throw ParseError(where + "round must be a non-negative integer");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::map<Sequence, double> load_fitness_table(const std::filesystem::path& path, const Alphabet& alphabet) {
  std::map<Sequence, double> table;
  std::size_t length = 0;
  for (auto& row : read_fitness_csv(path, alphabet)) {
    const std::string where = path.string() + ":" + std::to_string(row.line) + ": ";
    if (table.empty()) length = row.sequence.size();
    if (row.sequence.size() != length) throw ParseError(where + "sequence length differs from first row");
    auto [it, inserted] = table.emplace(row.sequence, row.fitness);
    if (!inserted && it->second != row.fitness) throw ParseError(where + "duplicate sequence with conflicting fitness");
  }
  if (table.empty()) throw ParseError(path.string() + ": no rows");
  return table;
}

TableOracle load_table_oracle(const std::filesystem::path& path, const Alphabet& alphabet) {
  return TableOracle(load_fitness_table(path, alphabet));
}

double NoisySpec::delta_noise() const {
  if (var_d0 < 0.0) throw ConfigError("Var(D0) must be >= 0");
  return std::sqrt(var_d0) * std::pow(10.0, -snr / 10.0);
}

NoisyProxy::NoisyProxy(std::shared_ptr<const Oracle> oracle, NoisySpec spec)
    : oracle_(std::move(oracle)), spec_(spec), delta_(spec.delta_noise()) {
  if (spec_.ensemble_size < 1) throw ConfigError("noisy proxy needs ensemble_size >= 1");
}

std::vector<double> NoisyProxy::member_outputs(const Sequence& x) const {
  const double truth = oracle_->fitness(x);
  std::vector<double> out(spec_.ensemble_size, truth);
  if (delta_ == 0.0) return out;
  for (std::size_t j = 0; j < out.size(); ++j) {
    Rng rng(derive_seed(spec_.seed, "noise", {j, x.hash()}));
    out[j] += delta_ * rng.normal();
  }
  return out;
}

std::vector<Prediction> NoisyProxy::predict_batch(std::span<const Sequence> xs) const {
  std::vector<Prediction> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    const auto outputs = member_outputs(x);
    out.push_back(combine_members(outputs));
  }
  return out;
}

NoisyProxy make_noisy_proxy(std::shared_ptr<const Oracle> oracle, const NoisySpec& spec) {
  return NoisyProxy(std::move(oracle), spec);
}

Prediction combine_members(std::span<const double> outputs) {
  if (outputs.empty()) throw StateError("combine_members: no member outputs");
  const double n = static_cast<double>(outputs.size());
  double mean = 0.0;
  for (double v : outputs) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : outputs) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace silo
