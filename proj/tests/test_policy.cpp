#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "silo/errors.hpp"
#include "silo/policy.hpp"
#include "support.hpp"

using namespace silo;

namespace {

const Alphabet abc("ABC", 0);
const Alphabet ab2("AB", 0);

PolicyConfig tiny(double head_std = 0.0) {
  PolicyConfig c;
  c.dim = 8;
  c.heads = 2;
  c.blocks = 1;
  c.head_init_std = head_std;
  return c;
}

double total_prob(const std::vector<double>& logp) {
  double s = 0.0;
  for (double v : logp) s += std::exp(v);
  return s;
}

// Every legal trajectory of exactly `depth` steps from x.
void enumerate(const Sequence& x, const Alphabet& a, std::size_t depth, std::vector<EditAction>& prefix,
               const EpisodeState& s, std::vector<std::vector<EditAction>>& out) {
  if (prefix.size() == depth) {
    out.push_back(prefix);
    return;
  }
  for (std::size_t l = 0; l < x.size(); ++l)
    for (Residue r = 0; r < a.size(); ++r) {
      const EditAction act{l, r};
      if (!s.legal(act)) continue;
      prefix.push_back(act);
      enumerate(x, a, depth, prefix, s.advance(act, a), out);
      prefix.pop_back();
    }
}

}  // namespace

TEST(EpisodeState, LegalityAndAdvance) {
  const auto x = abc.parse("ABC");
  auto s = EpisodeState::start(x);
  EXPECT_FALSE(s.legal({0, 0}));  // same residue
  EXPECT_TRUE(s.legal({0, 1}));
  EXPECT_FALSE(s.legal({3, 1}));
  s = s.advance({0, 1}, abc);
  EXPECT_EQ(s.current, abc.parse("BBC"));
  EXPECT_EQ(s.step, 1u);
  EXPECT_FALSE(s.legal({0, 2}));  // already edited
  EXPECT_THROW(s.advance({0, 2}, abc), ProvenanceError);
}

TEST(PositionDistribution, UniformAndMasked) {
  PolicyModel p(5, abc, tiny(), 1);
  const auto x = abc.parse("ABCAB");
  auto s = EpisodeState::start(x);
  for (double lp : position_distribution(p, s)) EXPECT_NEAR(std::exp(lp), 0.2, 1e-3);
  s = s.advance({1, 0}, abc);
  const auto lp = position_distribution(p, s);
  EXPECT_EQ(std::exp(lp[1]), 0.0);
  EXPECT_NEAR(total_prob(lp), 1.0, 1e-12);

  PolicyModel one(1, abc, tiny(0.5), 2);
  EXPECT_NEAR(std::exp(position_distribution(one, EpisodeState::start(abc.parse("C")))[0]), 1.0, 1e-15);
}

TEST(ResidueDistribution, MasksCurrentResidue) {
  PolicyModel p(3, ab2, tiny(0.7), 3);
  const auto s = EpisodeState::start(ab2.parse("ABA"));
  const auto lp = residue_distribution(p, s, 1);
  EXPECT_EQ(std::exp(lp[1]), 0.0);
  EXPECT_NEAR(std::exp(lp[0]), 1.0, 1e-15);

  PolicyModel u(4, Alphabet::amino_acids(), tiny(), 4);
  const auto x = Alphabet::amino_acids().parse("MKVW");
  const auto lr = residue_distribution(u, EpisodeState::start(x), 2);
  EXPECT_EQ(std::exp(lr[x[2]]), 0.0);
  for (Residue r = 0; r < 20; ++r)
    if (r != x[2]) EXPECT_NEAR(std::exp(lr[r]), 1.0 / 19.0, 1e-3);

  auto edited = EpisodeState::start(ab2.parse("ABA")).advance({2, 1}, ab2);
  EXPECT_THROW(residue_distribution(p, edited, 2), PreconditionError);
  EXPECT_THROW(residue_distribution(p, edited, 3), PreconditionError);
}

TEST(TrajectoryLogprob, UniformExamples) {
  PolicyModel p(2, abc, tiny(), 5);
  const auto x = abc.parse("AB");
  EXPECT_NEAR(trajectory_logprob(p, x, make_trajectory(x, {{0, 2}})), std::log(0.25), 1e-12);
  EXPECT_EQ(trajectory_logprob(p, x, make_trajectory(x, {})), 0.0);
  EXPECT_THROW(trajectory_logprob(p, x, make_trajectory(x, {{0, 0}})), ProvenanceError);
  EXPECT_THROW(trajectory_logprob(p, x, make_trajectory(abc.parse("CC"), {{0, 0}})), ProvenanceError);
}

TEST(TrajectoryLogprob, EqualsSumOfStepwiseTerms) {
  PolicyModel p(4, abc, tiny(0.8), 6);
  const auto x = abc.parse("ABCA");
  const std::vector<EditAction> acts{{2, 0}, {0, 1}, {3, 2}};
  double stepwise = 0.0;
  auto s = EpisodeState::start(x);
  for (const auto& a : acts) {
    stepwise += position_distribution(p, s)[a.position] + residue_distribution(p, s, a.position)[a.residue];
    s = s.advance(a, abc);
  }
  EXPECT_NEAR(trajectory_logprob(p, x, make_trajectory(x, acts)), stepwise, 1e-12);
}

TEST(Normalization, AllLegalTrajectoriesSumToOne) {
  for (std::uint64_t seed : {1, 2, 3}) {
    PolicyModel p(3, ab2, tiny(1.0), seed);
    const auto x = ab2.parse("ABA");
    std::vector<std::vector<EditAction>> all;
    std::vector<EditAction> prefix;
    enumerate(x, ab2, 2, prefix, EpisodeState::start(x), all);
    EXPECT_EQ(all.size(), 6u);
    double total = 0.0;
    for (const auto& t : all) total += std::exp(trajectory_logprob(p, x, make_trajectory(x, t)));
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Normalization, EveryReachableStateIsADistribution) {
  PolicyModel p(4, abc, tiny(1.0), 8);
  const auto x = abc.parse("CABA");
  std::vector<std::vector<EditAction>> all;
  std::vector<EditAction> prefix;
  enumerate(x, abc, 2, prefix, EpisodeState::start(x), all);
  for (const auto& t : all) {
    const auto s = EpisodeState::start(x).advance(t[0], abc);
    const auto pos = position_distribution(p, s);
    EXPECT_NEAR(total_prob(pos), 1.0, 1e-6);
    EXPECT_EQ(std::exp(pos[t[0].position]), 0.0);
    const auto res = residue_distribution(p, s, t[1].position);
    EXPECT_NEAR(total_prob(res), 1.0, 1e-6);
    EXPECT_EQ(std::exp(res[s.current[t[1].position]]), 0.0);
  }
}

TEST(Imitation, InitialUniformLoss) {
  PolicyModel p(4, abc, tiny(), 9);
  const auto x = abc.parse("ABCA");
  const std::vector<Demonstration> demos{{x, make_trajectory(x, {{1, 2}})}};
  const auto trace = imitation_update(p, demos, 1, 4, 1e-5, 1);
  ASSERT_EQ(trace.size(), 1u);
  EXPECT_NEAR(trace[0], std::log(4.0) + std::log(2.0), 1e-3);
}

TEST(Imitation, ZeroStepsLeavesParameters) {
  PolicyModel p(4, abc, tiny(0.3), 9);
  const auto before = p.params();
  const auto x = abc.parse("ABCA");
  const std::vector<Demonstration> demos{{x, make_trajectory(x, {{1, 2}})}};
  EXPECT_TRUE(imitation_update(p, demos, 0, 4, 1e-3, 1).empty());
  EXPECT_TRUE(p.params().same_values(before));
  EXPECT_THROW(imitation_update(p, {}, 3, 4, 1e-3, 1), PreconditionError);
}

TEST(Imitation, PairsCoverEveryStep) {
  PolicyModel p(4, abc, tiny(), 9);
  const auto x = abc.parse("ABCA");
  const std::vector<Demonstration> demos{{x, make_trajectory(x, {{1, 2}, {3, 1}})}, {x, make_trajectory(x, {{0, 1}})}};
  const auto pairs = imitation_pairs(p, demos);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[1].state.current, abc.parse("ACCA"));
  EXPECT_EQ(pairs[1].action.position, 3u);
  EXPECT_EQ(pairs[2].state.step, 0u);
}

TEST(Imitation, LossDecreasesOnMemorisationTask) {
  PolicyModel p(5, abc, tiny(0.1), 10);
  const auto x = abc.parse("ABCAB");
  const std::vector<Demonstration> demos{{x, make_trajectory(x, {{3, 1}, {0, 2}})}};
  const auto trace = imitation_update(p, demos, 60, 8, 3e-3, 2);
  ASSERT_EQ(trace.size(), 60u);
  // Moving average over windows of 10 must fall window to window.
  std::vector<double> smooth;
  for (std::size_t i = 0; i + 10 <= 50; i += 10) smooth.push_back(std::accumulate(trace.begin() + i, trace.begin() + i + 10, 0.0) / 10);
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LT(smooth[i], smooth[i - 1]);
}

TEST(Imitation, LossGradientMatchesFiniteDifferences) {
  PolicyModel p(3, abc, tiny(0.5), 12);
  const auto x = abc.parse("ABC");
  const std::vector<Demonstration> demos{{x, make_trajectory(x, {{2, 0}, {0, 1}})}, {x, make_trajectory(x, {{1, 2}})}};
  const auto pairs = imitation_pairs(p, demos);
  auto r = silo::testing::check_gradients(p.params(), [&](nn::Tape& t) { return imitation_loss(t, p, pairs, true); }, 12);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Imitation, DeterministicForSeed) {
  const auto x = abc.parse("ABCAB");
  const std::vector<Demonstration> demos{{x, make_trajectory(x, {{3, 1}})}};
  PolicyModel a(5, abc, tiny(0.1), 10), b(5, abc, tiny(0.1), 10);
  EXPECT_EQ(imitation_update(a, demos, 5, 4, 1e-3, 7), imitation_update(b, demos, 5, 4, 1e-3, 7));
  EXPECT_TRUE(a.params().same_values(b.params()));
}
