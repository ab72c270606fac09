#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "silo/scorer.hpp"
#include "silo/seqcore.hpp"

namespace silo {

// Ground-truth fitness O(x). evaluate() is the budgeted entry point and
// counts every call; fitness() is the uncounted pure value used for
// instrumentation and for simulated noisy proxies.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual std::size_t length() const = 0;
  virtual double fitness(const Sequence& x) const = 0;

  double evaluate(const Sequence& x) {
    const double f = fitness(x);
    queries_.fetch_add(1, std::memory_order_relaxed);
    return f;
  }
  std::uint64_t queries() const { return queries_.load(std::memory_order_relaxed); }

 protected:
  void check_length(const Sequence& x) const;

 private:
  std::atomic<std::uint64_t> queries_{0};
};

// Kauffman NK landscape normalised to [0, 1]: each position contributes a
// table value indexed by its own residue and the residues of k neighbours;
// fitness is the mean contribution.
class NkLandscape : public Oracle {
 public:
  NkLandscape(std::size_t length, std::size_t k, std::size_t alphabet_size, std::uint64_t seed);

  std::size_t length() const override { return length_; }
  double fitness(const Sequence& x) const override;

  std::size_t k() const { return k_; }
  std::size_t alphabet_size() const { return alphabet_size_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }
  const std::vector<double>& table(std::size_t i) const { return tables_[i]; }
  // Contribution of position i; table index is own residue followed by the
  // neighbour residues in neighbors(i) order, most significant first.
  double contribution(std::size_t i, const Sequence& x) const;

  // Test hook: overwrite every table entry.
  void fill_tables(double value);

 private:
  std::size_t length_, k_, alphabet_size_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::vector<std::vector<double>> tables_;
};

NkLandscape make_nk(std::size_t length, std::size_t k, const Alphabet& alphabet, std::uint64_t seed);

// Wraps another oracle; each designated position not holding its wildtype
// or the neutral residue multiplies fitness by `penalty`.
class CriticalPositionsLandscape : public Oracle {
 public:
  CriticalPositionsLandscape(std::shared_ptr<const Oracle> base, Sequence wildtype,
                             std::vector<std::size_t> critical, Residue neutral, double penalty = 0.2);

  std::size_t length() const override { return base_->length(); }
  double fitness(const Sequence& x) const override;
  const std::vector<std::size_t>& critical_positions() const { return critical_; }
  bool touches_critical(const Sequence& x) const;

 private:
  std::shared_ptr<const Oracle> base_;
  Sequence wildtype_;
  std::vector<std::size_t> critical_;
  Residue neutral_;
  double penalty_;
};

// Exact lookup over a fixed list; unlisted queries raise CoverageError.
class TableOracle : public Oracle {
 public:
  explicit TableOracle(std::map<Sequence, double> table);

  std::size_t length() const override { return length_; }
  double fitness(const Sequence& x) const override;
  std::size_t entries() const { return table_.size(); }

 private:
  std::map<Sequence, double> table_;
  std::size_t length_ = 0;
};

struct FitnessRow {
  Sequence sequence;
  double fitness = 0.0;
  std::optional<int> round;
  std::size_t line = 0;
};

// CSV with header `sequence,fitness` (an optional third `round` column is
// accepted). Throws ParseError with the offending line number.
std::vector<FitnessRow> read_fitness_csv(const std::filesystem::path& path, const Alphabet& alphabet);

// Sequence -> fitness map; identical duplicates are merged, conflicting ones
// throw ParseError.
std::map<Sequence, double> load_fitness_table(const std::filesystem::path& path, const Alphabet& alphabet);
TableOracle load_table_oracle(const std::filesystem::path& path, const Alphabet& alphabet);

struct NoisySpec {
  double snr = 0.0;
  double var_d0 = 0.0;
  std::size_t ensemble_size = 3;
  std::uint64_t seed = 0;

  // sqrt(Var(D0)) * 10^(-snr/10)
  double delta_noise() const;
};

// Ensemble of noisy copies of an oracle. Member j answers O(x) + g with
// g ~ N(0, delta^2) drawn from a stream keyed on (seed, j, x), so answers do
// not depend on query order. Does not touch the oracle's query counter.
class NoisyProxy : public Scorer {
 public:
  NoisyProxy(std::shared_ptr<const Oracle> oracle, NoisySpec spec);

  std::vector<Prediction> predict_batch(std::span<const Sequence> xs) const override;
  std::vector<double> member_outputs(const Sequence& x) const;
  double delta_noise() const { return delta_; }

 private:
  std::shared_ptr<const Oracle> oracle_;
  NoisySpec spec_;
  double delta_;
};

NoisyProxy make_noisy_proxy(std::shared_ptr<const Oracle> oracle, const NoisySpec& spec);

}  // namespace silo
