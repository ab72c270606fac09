#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "silo/errors.hpp"
#include "silo/landscape.hpp"
#include "silo/rng.hpp"

using namespace silo;
namespace fs = std::filesystem;

namespace {

// Reference NK value straight from the exposed tables.
double reference_fitness(const NkLandscape& nk, const Sequence& x) {
  const auto V = nk.alphabet_size();
  double total = 0.0;
  for (std::size_t i = 0; i < nk.length(); ++i) {
    std::size_t idx = x[i];
    for (auto j : nk.neighbors(i)) idx = idx * V + x[j];
    total += nk.table(i).at(idx);
  }
  return total / static_cast<double>(nk.length());
}

Sequence decode(std::size_t code, std::size_t L, std::size_t V) {
  std::vector<Residue> r(L);
  for (std::size_t i = L; i-- > 0;) {
    r[i] = static_cast<Residue>(code % V);
    code /= V;
  }
  return Sequence(r);
}

fs::path write_file(const std::string& name, const std::string& text) {
  const auto path = fs::temp_directory_path() / ("silo_test_" + name);
  std::ofstream(path) << text;
  return path;
}

const Alphabet abcd("ABCD", 0);

}  // namespace

TEST(Nk, DeterministicForFixedArguments) {
  const auto a = make_nk(10, 3, abcd, 42);
  const auto b = make_nk(10, 3, abcd, 42);
  const auto c = make_nk(10, 3, abcd, 43);
  Rng rng(1);
  bool differs = false;
  for (int i = 0; i < 50; ++i) {
    std::vector<Residue> r(10);
    for (auto& v : r) v = static_cast<Residue>(rng.below(4));
    const Sequence x(r);
    EXPECT_EQ(a.fitness(x), b.fitness(x));
    differs = differs || a.fitness(x) != c.fitness(x);
  }
  EXPECT_TRUE(differs);
}

TEST(Nk, NeighboursExcludeSelfAndAreDistinct) {
  const auto nk = make_nk(9, 4, abcd, 3);
  for (std::size_t i = 0; i < 9; ++i) {
    auto n = nk.neighbors(i);
    EXPECT_EQ(n.size(), 4u);
    EXPECT_EQ(std::count(n.begin(), n.end(), i), 0);
    std::sort(n.begin(), n.end());
    EXPECT_EQ(std::adjacent_find(n.begin(), n.end()), n.end());
  }
}

TEST(Nk, ConstantTablesGiveConstantFitness) {
  auto nk = make_nk(7, 0, abcd, 1);
  nk.fill_tables(0.5);
  EXPECT_DOUBLE_EQ(nk.fitness(abcd.parse("ABCDABC")), 0.5);
  EXPECT_DOUBLE_EQ(nk.evaluate(abcd.parse("DDDDDDD")), 0.5);
}

TEST(Nk, RejectsInvalidOrder) {
  EXPECT_THROW(make_nk(5, 5, abcd, 0), ConfigError);
  EXPECT_THROW(make_nk(5, 7, abcd, 0), ConfigError);
}

TEST(Nk, FitnessIsMeanOfContributions) {
  const auto nk = make_nk(6, 1, abcd, 9);
  const auto x = abcd.parse("ABDCAB");
  EXPECT_NEAR(nk.fitness(x), reference_fitness(nk, x), 1e-15);
  double sum = 0.0;
  for (std::size_t i = 0; i < 6; ++i) sum += nk.contribution(i, x);
  EXPECT_NEAR(nk.fitness(x), sum / 6.0, 1e-15);
}

TEST(Nk, BruteForceOptimumL6K2) {
  // Exhaustive enumeration of all 4^6 sequences with the reference
  // evaluator; the optimum was computed this way and frozen.
  const auto nk = make_nk(6, 2, abcd, 7);
  double best = -1.0;
  std::size_t best_code = 0;
  for (std::size_t code = 0; code < 4096; ++code) {
    const auto x = decode(code, 6, 4);
    const double f = reference_fitness(nk, x);
    ASSERT_NEAR(f, nk.fitness(x), 1e-15);
    ASSERT_GE(f, 0.0);
    ASSERT_LE(f, 1.0);
    if (f > best) {
      best = f;
      best_code = code;
    }
  }
  EXPECT_NEAR(best, 0.91570765978272606, 1e-12);
  EXPECT_EQ(abcd.format(decode(best_code, 6, 4)), "ADCDAA");
}

TEST(Nk, ZeroOrderSingleEditBoundedByOneOverL) {
  const auto nk = make_nk(10, 0, abcd, 5);
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Residue> r(10);
    for (auto& v : r) v = static_cast<Residue>(rng.below(4));
    const Sequence x(r);
    const auto pos = rng.below(10);
    const auto y = apply_action(x, {pos, static_cast<Residue>(rng.below(4))}, abcd);
    EXPECT_LE(std::abs(nk.fitness(y) - nk.fitness(x)), 0.1 + 1e-15);
  }
}

TEST(Oracle, QueryCounterCountsEvaluateOnly) {
  auto nk = make_nk(5, 1, abcd, 2);
  const auto x = abcd.parse("ABCDA");
  for (int i = 0; i < 17; ++i) nk.evaluate(x);
  nk.fitness(x);
  EXPECT_EQ(nk.queries(), 17u);
  EXPECT_THROW(nk.evaluate(abcd.parse("ABC")), DimensionError);
}

TEST(CriticalPositions, PenalisesNonWildtypeNonNeutral) {
  auto base = std::make_shared<NkLandscape>(6, 1, 4, 3);
  const auto wt = abcd.parse("BCDBCD");
  CriticalPositionsLandscape crit(base, wt, {1, 4}, abcd.neutral(), 0.2);
  EXPECT_DOUBLE_EQ(crit.fitness(wt), base->fitness(wt));
  const auto neutral_edit = abcd.parse("BADBCD");  // position 1 -> neutral
  EXPECT_DOUBLE_EQ(crit.fitness(neutral_edit), base->fitness(neutral_edit));
  EXPECT_FALSE(crit.touches_critical(neutral_edit));
  const auto one = abcd.parse("BDDBCD");
  EXPECT_DOUBLE_EQ(crit.fitness(one), 0.2 * base->fitness(one));
  EXPECT_TRUE(crit.touches_critical(one));
  const auto two = abcd.parse("BDDBBD");
  EXPECT_NEAR(crit.fitness(two), 0.04 * base->fitness(two), 1e-15);
  const auto elsewhere = abcd.parse("CCDBCD");
  EXPECT_DOUBLE_EQ(crit.fitness(elsewhere), base->fitness(elsewhere));
}

TEST(TableOracle, LooksUpListedSequences) {
  const auto path = write_file("table3.csv", "sequence,fitness\nABC,0.5\nBBC,1.25\nCCC,-2\n");
  auto oracle = load_table_oracle(path, abcd);
  EXPECT_EQ(oracle.entries(), 3u);
  EXPECT_DOUBLE_EQ(oracle.evaluate(abcd.parse("ABC")), 0.5);
  EXPECT_DOUBLE_EQ(oracle.evaluate(abcd.parse("BBC")), 1.25);
  EXPECT_DOUBLE_EQ(oracle.evaluate(abcd.parse("CCC")), -2.0);
  EXPECT_THROW(oracle.evaluate(abcd.parse("DDD")), CoverageError);
}

TEST(TableOracle, ConflictingDuplicateIsParseError) {
  const auto path = write_file("conflict.csv", "sequence,fitness\nABC,0.5\nABC,0.6\n");
  EXPECT_THROW(load_table_oracle(path, abcd), ParseError);
  const auto same = write_file("same.csv", "sequence,fitness\nABC,0.5\nABC,0.5\n");
  EXPECT_EQ(load_table_oracle(same, abcd).entries(), 1u);
}

TEST(TableOracle, MalformedRowReportsLine) {
  const auto path = write_file("bad.csv", "sequence,fitness\nABC,0.5\nABD,zz\n");
  try {
    load_table_oracle(path, abcd);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_table_oracle(write_file("hdr.csv", "seq,fit\nABC,1\n"), abcd), ParseError);
  EXPECT_THROW(load_table_oracle(write_file("sym.csv", "sequence,fitness\nAXC,1\n"), abcd), ParseError);
}

TEST(NoisyProxy, DeltaFormula) {
  EXPECT_DOUBLE_EQ((NoisySpec{0.0, 1.0, 3, 0}.delta_noise()), 1.0);
  EXPECT_NEAR((NoisySpec{-10.0, 4.0, 3, 0}.delta_noise()), 20.0, 1e-12);
  EXPECT_THROW((NoisySpec{0.0, -1.0, 3, 0}.delta_noise()), ConfigError);
}

TEST(NoisyProxy, ZeroNoiseReturnsOracle) {
  auto nk = std::make_shared<NkLandscape>(6, 1, 4, 3);
  const auto proxy = make_noisy_proxy(nk, {0.0, 0.0, 3, 1});
  const auto x = abcd.parse("ABCDAB");
  const auto p = proxy.predict(x);
  EXPECT_DOUBLE_EQ(p.mu, nk->fitness(x));
  EXPECT_DOUBLE_EQ(p.sigma, 0.0);
  EXPECT_EQ(nk->queries(), 0u);
}

TEST(NoisyProxy, EmpiricalStdMatchesDelta) {
  auto nk = std::make_shared<NkLandscape>(8, 2, 4, 3);
  const auto proxy = make_noisy_proxy(nk, {-5.0, 0.02, 1, 99});
  Rng rng(4);
  double s2 = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    std::vector<Residue> r(8);
    for (auto& v : r) v = static_cast<Residue>(rng.below(4));
    const Sequence x(r);
    const double e = proxy.member_outputs(x)[0] - nk->fitness(x);
    s2 += e * e;
  }
  EXPECT_NEAR(std::sqrt(s2 / n), proxy.delta_noise(), 0.05 * proxy.delta_noise());
}

TEST(NoisyProxy, OrderIndependent) {
  auto nk = std::make_shared<NkLandscape>(6, 1, 4, 3);
  const auto proxy = make_noisy_proxy(nk, {0.0, 1.0, 3, 5});
  const std::vector<Sequence> xs{abcd.parse("ABCDAB"), abcd.parse("BBBBBB")};
  const std::vector<Sequence> ys{xs[1], xs[0]};
  const auto a = proxy.predict_batch(xs);
  const auto b = proxy.predict_batch(ys);
  EXPECT_EQ(a[0].mu, b[1].mu);
  EXPECT_EQ(a[1].sigma, b[0].sigma);
}

TEST(CombineMembers, PopulationStd) {
  const std::vector<double> out{1.0, 2.0, 3.0};
  const auto p = combine_members(out);
  EXPECT_DOUBLE_EQ(p.mu, 2.0);
  EXPECT_NEAR(p.sigma, std::sqrt(2.0 / 3.0), 1e-15);
  const std::vector<double> one{4.5};
  EXPECT_DOUBLE_EQ(combine_members(one).sigma, 0.0);
}
