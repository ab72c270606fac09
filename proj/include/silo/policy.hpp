#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "silo/numerics.hpp"
#include "silo/seqcore.hpp"

namespace silo {

struct PolicyConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  // Std of the head weights at initialisation; 0 gives exactly uniform
  // position and residue distributions.
  double head_init_std = 0.0;
  double lr = 1e-5;
  std::size_t batch = 16;
  std::size_t steps = 200;
};

// x^(t) plus the positions edited so far in this episode. A position may be
// edited at most once and a substitution must change the residue.
struct EpisodeState {
  Sequence current;
  std::vector<std::uint8_t> edited;
  std::size_t step = 0;

  static EpisodeState start(const Sequence& x);
  bool legal(EditAction a) const;
  // Throws ProvenanceError for an illegal action.
  EpisodeState advance(EditAction a, const Alphabet& alphabet) const;
};

// Log-probabilities for one state: position[L] and residue[L * V] (row l is
// the residue distribution given position l). Masked entries are -inf.
struct StepLogProbs {
  std::vector<double> position;
  std::vector<double> residue;
};

// Hierarchical edit policy: token + position + edited-flag embeddings, a
// stack of pre-norm transformer blocks, then a position head (R^L) and a
// per-position residue head (R^{L x V}).
class PolicyModel {
 public:
  PolicyModel(std::size_t length, Alphabet alphabet, PolicyConfig cfg, std::uint64_t seed);

  struct Heads {
    nn::Var position;  // [B, L] raw logits
    nn::Var residue;   // [B * L, V] raw logits
  };
  Heads forward(nn::Tape& tape, std::span<const EpisodeState> states, bool trainable) const;

  std::vector<StepLogProbs> log_probs(std::span<const EpisodeState> states) const;

  std::size_t length() const { return length_; }
  const Alphabet& alphabet() const { return alphabet_; }
  const PolicyConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  void save(const std::filesystem::path& stem) const { nn::save_checkpoint(stem, params_); }

 private:
  std::size_t length_;
  Alphabet alphabet_;
  PolicyConfig cfg_;
  nn::ParamStore params_;
};

// Masks for a batch of states: positions already edited, and per position the
// residue it currently holds.
std::vector<std::uint8_t> position_mask(std::span<const EpisodeState> states);
std::vector<std::uint8_t> residue_mask(std::span<const EpisodeState> states, std::size_t alphabet_size);

// Masked log-probabilities over positions (length L).
std::vector<double> position_distribution(const PolicyModel& p, const EpisodeState& s);
// Masked log-probabilities over residues at `pos` (length |V|). Throws
// PreconditionError when pos is out of range or already edited.
std::vector<double> residue_distribution(const PolicyModel& p, const EpisodeState& s, std::size_t pos);

// Sum over steps of log p(position) + log p(residue | position).
double trajectory_logprob(const PolicyModel& p, const Sequence& x_start, const Trajectory& t);

struct Demonstration {
  Sequence x_start;
  Trajectory trajectory;
};

// One (history, next action) training pair, expanded by replay.
struct ImitationPair {
  EpisodeState state;
  EditAction action;
};

std::vector<ImitationPair> imitation_pairs(const PolicyModel& p, std::span<const Demonstration> demos);

// Mean negative log-likelihood of the pairs' next actions; differentiable.
nn::Var imitation_loss(nn::Tape& tape, const PolicyModel& p, std::span<const ImitationPair> pairs, bool trainable);

// `steps` Adam updates on batches drawn uniformly with replacement from all
// (history, next action) pairs of the demonstrations. Returns the loss of
// each batch before its update.
std::vector<double> imitation_update(PolicyModel& p, std::span<const Demonstration> demos, std::size_t steps,
                                     std::size_t batch, double lr, std::uint64_t seed);

}  // namespace silo
