#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "silo/scorer.hpp"
#include "silo/seqcore.hpp"

namespace silo {

struct Candidate {
  Sequence sequence;
  Trajectory trajectory;
};

struct ScoredCandidate {
  Sequence sequence;
  Trajectory trajectory;
  double mu = 0.0;
  double sigma = 0.0;
  double mu_afs = 0.0;
  double sigma_afs = 0.0;
  double score = 0.0;
  std::size_t index = 0;  // position in the sampled list
};

inline double ucb(double mu, double sigma, double gamma) { return mu + gamma * sigma; }

// A(x): every position mutated relative to x_start set to the neutral residue.
Sequence afs_variant(const Sequence& x, const Sequence& x_start, const Alphabet& alphabet);

// S(x) = ucb(mu(x), sigma(x), gamma1) + ucb(mu(A(x)), sigma(A(x)), gamma2),
// both terms from the same scorer. With use_afs false only the first term is
// used and the AFS fields stay 0. Throws ProvenanceError when a trajectory
// does not replay to its sequence.
std::vector<ScoredCandidate> score_candidates(std::span<const Candidate> cands, const Scorer& scorer,
                                              const Sequence& x_start, const Alphabet& alphabet, double gamma1,
                                              double gamma2, bool use_afs = true);

// Descending score, one entry per distinct sequence; ties go to the
// lexicographically smaller sequence, then the earlier sample.
std::vector<ScoredCandidate> select_topk_unique(std::span<const ScoredCandidate> scored, std::size_t K);

// sequence,score,mu,sigma,mu_afs,sigma_afs,selected
void write_candidates_csv(const std::filesystem::path& path, std::span<const ScoredCandidate> scored,
                          std::span<const ScoredCandidate> selected, const Alphabet& alphabet);

}  // namespace silo
