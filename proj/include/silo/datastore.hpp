#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "silo/landscape.hpp"
#include "silo/seqcore.hpp"

namespace silo {

struct LabeledEntry {
  Sequence sequence;
  double fitness = 0.0;
  int round = 0;  // 0 marks the initial data
};

// Append-only collection of oracle-labelled sequences.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::vector<LabeledEntry> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<LabeledEntry>& entries() const { return entries_; }
  const LabeledEntry& operator[](std::size_t i) const { return entries_[i]; }
  int max_round() const;

  // Used by append_batch; see there for the round rule.
  void append(std::vector<std::pair<Sequence, double>> pairs, int round);

 private:
  std::vector<LabeledEntry> entries_;
};

// Highest-fitness sequence; ties go to the earliest inserted entry.
const LabeledEntry& argmax_entry(const LabeledDataset& d);
Sequence argmax_start(const LabeledDataset& d);

// ceil(fraction * |d|) entries chosen uniformly without replacement, kept
// in their original order. fraction == 1 returns d unchanged.
LabeledDataset subsample(const LabeledDataset& d, double fraction, std::uint64_t seed);

// Random disjoint partition; |val| = max(1, round(val_fraction * |d|)).
std::pair<LabeledDataset, LabeledDataset> split_train_val(const LabeledDataset& d, double val_fraction,
                                                          std::uint64_t seed);

// Appends pairs under `round`, which must exceed every existing round unless
// the dataset holds only round-0 entries. Re-queried (sequence, round)
// duplicates are appended with a warning.
LabeledDataset append_batch(LabeledDataset d, std::vector<std::pair<Sequence, double>> pairs, int round);

// Population variance of the fitness column.
double fitness_variance(const LabeledDataset& d);

// M0 sequences at Hamming radius drawn uniformly from [radius_min, radius_max]
// around the wildtype, labelled with the oracle's (uncounted) fitness.
LabeledDataset make_initial_dataset(const Oracle& oracle, const Sequence& wildtype, const Alphabet& alphabet,
                                    std::size_t count, std::size_t radius_min, std::size_t radius_max,
                                    std::uint64_t seed);

LabeledDataset load_dataset_csv(const std::filesystem::path& path, const Alphabet& alphabet);
// Writes `sequence,fitness,round`.
void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& d, const Alphabet& alphabet);

}  // namespace silo
