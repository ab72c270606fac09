#include "silo/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>

#include "silo/errors.hpp"
#include "silo/log.hpp"
#include "silo/rng.hpp"

namespace silo {

LabeledDataset::LabeledDataset(std::vector<LabeledEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 1; i < entries_.size(); ++i)
    if (entries_[i].round < entries_[i - 1].round) throw StateError("dataset rounds must be non-decreasing");
}

int LabeledDataset::max_round() const { return entries_.empty() ? 0 : entries_.back().round; }

void LabeledDataset::append(std::vector<std::pair<Sequence, double>> pairs, int round) {
  if (round < 0) throw StateError("round must be >= 0");
  const bool only_initial = max_round() == 0;
  if (!only_initial && round <= max_round())
    throw StateError("append at round " + std::to_string(round) + " after round " + std::to_string(max_round()));
  if (only_initial && round < max_round()) throw StateError("rounds must be non-decreasing");

  std::set<Sequence> seen;
  for (auto it = entries_.rbegin(); it != entries_.rend() && it->round == round; ++it) seen.insert(it->sequence);
  for (auto& [seq, fit] : pairs) {
    if (!seen.insert(seq).second) log::warn("re-queried sequence appended twice in round " + std::to_string(round));
    entries_.push_back(LabeledEntry{std::move(seq), fit, round});
  }
}

const LabeledEntry& argmax_entry(const LabeledDataset& d) {
  if (d.empty()) throw StateError("argmax over an empty dataset");
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i].fitness > d[best].fitness) best = i;
  return d[best];
}

Sequence argmax_start(const LabeledDataset& d) { return argmax_entry(d).sequence; }

LabeledDataset subsample(const LabeledDataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subsample fraction must lie in (0, 1]");
  if (fraction == 1.0) return d;
  const auto n = d.size();
  const auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  std::vector<LabeledEntry> out;
  out.reserve(take);
  for (auto i : idx) out.push_back(d[i]);
  return LabeledDataset(std::move(out));
}

std::pair<LabeledDataset, LabeledDataset> split_train_val(const LabeledDataset& d, double val_fraction,
                                                          std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  const auto n = d.size();
  if (n < 2) throw StateError("train/validation split needs at least 2 entries");
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
  std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  auto gather = [&](const std::vector<std::size_t>& ids) {
    std::vector<LabeledEntry> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(d[i]);
    return LabeledDataset(std::move(out));
  };
  return {gather(train_idx), gather(val_idx)};
}

LabeledDataset append_batch(LabeledDataset d, std::vector<std::pair<Sequence, double>> pairs, int round) {
  d.append(std::move(pairs), round);
  return d;
}

double fitness_variance(const LabeledDataset& d) {
  if (d.empty()) throw StateError("variance of an empty dataset");
  double mean = 0.0;
  for (const auto& e : d.entries()) mean += e.fitness;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (const auto& e : d.entries()) var += (e.fitness - mean) * (e.fitness - mean);
  return var / static_cast<double>(d.size());
}

LabeledDataset make_initial_dataset(const Oracle& oracle, const Sequence& wildtype, const Alphabet& alphabet,
                                    std::size_t count, std::size_t radius_min, std::size_t radius_max,
                                    std::uint64_t seed) {
  const auto L = wildtype.size();
  if (radius_min < 1 || radius_min > radius_max || radius_max > L)
    throw ConfigError("initial dataset radius must satisfy 1 <= min <= max <= L");
  Rng rng(seed);
  std::vector<LabeledEntry> out;
  out.reserve(count);
  std::vector<std::size_t> positions(L);
  for (std::size_t n = 0; n < count; ++n) {
    const auto radius = radius_min + rng.below(radius_max - radius_min + 1);
    std::iota(positions.begin(), positions.end(), 0);
    std::vector<Residue> r(wildtype.residues().begin(), wildtype.residues().end());
    for (std::size_t i = 0; i < radius; ++i) {
      std::swap(positions[i], positions[i + rng.below(L - i)]);
      const auto pos = positions[i];
      auto res = static_cast<Residue>(rng.below(alphabet.size() - 1));
      if (res >= wildtype[pos]) ++res;
      r[pos] = res;
    }
    Sequence x(std::move(r));
    const double f = oracle.fitness(x);
    out.push_back(LabeledEntry{std::move(x), f, 0});
  }
  return LabeledDataset(std::move(out));
}

LabeledDataset load_dataset_csv(const std::filesystem::path& path, const Alphabet& alphabet) {
  std::vector<LabeledEntry> entries;
  for (auto& row : read_fitness_csv(path, alphabet)) {
    if (!entries.empty() && row.sequence.size() != entries.front().sequence.size())
      throw ParseError(path.string() + ":" + std::to_string(row.line) + ": sequence length differs from first row");
    const int round = row.round.value_or(0);
    if (!entries.empty() && round < entries.back().round)
      throw ParseError(path.string() + ":" + std::to_string(row.line) + ": rounds must be non-decreasing");
    entries.push_back(LabeledEntry{std::move(row.sequence), row.fitness, round});
  }
  return LabeledDataset(std::move(entries));
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& d, const Alphabet& alphabet) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sequence,fitness,round\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& e : d.entries()) out << alphabet.format(e.sequence) << ',' << e.fitness << ',' << e.round << '\n';
}

}  // namespace silo
