#pragma once

#include <span>
#include <vector>

#include "silo/datastore.hpp"
#include "silo/seqcore.hpp"

namespace silo {

struct TopEntry {
  Sequence sequence;
  double fitness = 0.0;
};

// Top-R distinct sequences by fitness, descending; ties keep discovery order.
struct TopSet {
  std::vector<TopEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Builds the top set from dataset entries in insertion order. With
// generated_only, round-0 (initial) entries are left out.
TopSet make_topset(const LabeledDataset& d, std::size_t R, bool generated_only = true);

double max_fitness(const TopSet& ts);
double mean_fitness(const TopSet& ts);
// Mean Hamming distance to x_start.
double novelty(const TopSet& ts, const Sequence& x_start);
// Sum of Hamming distances over ordered pairs divided by n(n-1). Fewer than
// two entries throw StateError unless allow_small, which then gives 0.
double diversity(const TopSet& ts, bool allow_small = false);
// Median of the top min(R, n) values; an even count averages the central pair.
double median_topk(std::span<const double> fitness, std::size_t R);
double median_topk(const LabeledDataset& d, std::size_t R);

struct Summary {
  double max_fitness = 0.0;
  double mean_top100 = 0.0;
  double novelty_top100 = 0.0;
  double diversity_top100 = 0.0;
  double median_top50 = 0.0;
};

// Metrics over generated sequences only. Throws StateError when there are none.
Summary summarize(const LabeledDataset& d, const Sequence& x_start, std::size_t top_r = 100,
                  std::size_t median_r = 50);

}  // namespace silo
