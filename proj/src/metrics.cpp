#include "silo/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <string>

#include "silo/errors.hpp"

namespace silo {

TopSet make_topset(const LabeledDataset& d, std::size_t R, bool generated_only) {
  std::vector<const LabeledEntry*> pool;
  std::set<Sequence> seen;
  for (const auto& e : d.entries()) {
    if (generated_only && e.round == 0) continue;
    if (!seen.insert(e.sequence).second) continue;
    pool.push_back(&e);
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [](const LabeledEntry* a, const LabeledEntry* b) { return a->fitness > b->fitness; });
  TopSet ts;
  for (std::size_t i = 0; i < std::min(R, pool.size()); ++i) ts.entries.push_back({pool[i]->sequence, pool[i]->fitness});
  return ts;
}

namespace {

void require_entries(const TopSet& ts, const char* what) {
  if (ts.empty()) throw StateError(std::string(what) + " of an empty top set");
}

}  // namespace

double max_fitness(const TopSet& ts) {
  require_entries(ts, "max_fitness");
  double best = ts.entries.front().fitness;
  for (const auto& e : ts.entries) best = std::max(best, e.fitness);
  return best;
}

double mean_fitness(const TopSet& ts) {
  require_entries(ts, "mean_fitness");
  double s = 0.0;
  for (const auto& e : ts.entries) s += e.fitness;
  return s / static_cast<double>(ts.size());
}

double novelty(const TopSet& ts, const Sequence& x_start) {
  require_entries(ts, "novelty");
  std::uint64_t total = 0;
  for (const auto& e : ts.entries) total += hamming(e.sequence, x_start);
  return static_cast<double>(total) / static_cast<double>(ts.size());
}

double diversity(const TopSet& ts, bool allow_small) {
  const auto n = ts.size();
  if (n < 2) {
    if (allow_small) return 0.0;
    throw StateError("diversity needs at least two sequences");
  }
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) total += 2 * hamming(ts.entries[i].sequence, ts.entries[j].sequence);
  return static_cast<double>(total) / static_cast<double>(n * (n - 1));
}

double median_topk(std::span<const double> fitness, std::size_t R) {
  if (fitness.empty()) throw StateError("median of an empty set");
  if (R == 0) throw PreconditionError("median_topk: R must be >= 1");
  std::vector<double> v(fitness.begin(), fitness.end());
  std::sort(v.begin(), v.end(), std::greater<>());
  v.resize(std::min(R, v.size()));
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double median_topk(const LabeledDataset& d, std::size_t R) {
  std::vector<double> f;
  for (const auto& e : d.entries()) f.push_back(e.fitness);
  return median_topk(f, R);
}

Summary summarize(const LabeledDataset& d, const Sequence& x_start, std::size_t top_r, std::size_t median_r) {
  const auto ts = make_topset(d, top_r);
  if (ts.empty()) throw StateError("no generated sequences to summarise");
  const auto median_set = make_topset(d, median_r);
  std::vector<double> f;
  for (const auto& e : median_set.entries) f.push_back(e.fitness);
  return {max_fitness(ts), mean_fitness(ts), novelty(ts, x_start), diversity(ts, true), median_topk(f, median_r)};
}

}  // namespace silo
