#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "silo/policy.hpp"
#include "silo/rng.hpp"
#include "silo/seqcore.hpp"

namespace silo {

// One outgoing edge of a search-tree node: the action and its log-probability
// conditional on the prefix.
struct ChildEdge {
  EditAction action;
  double logp = 0.0;
};

// Source of next-action distributions for the search tree.
class TransitionModel {
 public:
  virtual ~TransitionModel() = default;
  // For each prefix, the legal next actions with conditional log-probs.
  virtual std::vector<std::vector<ChildEdge>> expand(std::span<const std::vector<EditAction>> prefixes) const = 0;
};

// Edit MDP under a policy: a node's children are every unmasked
// (position, residue) pair with log p(pos) + log p(res | pos).
class PolicyTransition : public TransitionModel {
 public:
  PolicyTransition(const PolicyModel& policy, Sequence x_start) : policy_(policy), x_start_(std::move(x_start)) {}
  std::vector<std::vector<ChildEdge>> expand(std::span<const std::vector<EditAction>> prefixes) const override;

 private:
  const PolicyModel& policy_;
  Sequence x_start_;
};

// Lazily expanded tree of action prefixes bound to (x_start, depth). Each node
// keeps the log of its remaining (not yet removed) probability mass.
class SearchTree {
 public:
  struct Node {
    std::size_t parent = 0;
    EditAction action;
    std::size_t depth = 0;
    double logp = 0.0;            // model log-probability of the prefix
    double log_remaining = 0.0;   // log of un-removed mass below this node
    bool expanded = false;
    std::vector<std::size_t> children;
  };

  // Remaining mass below exp(-30) counts as exhausted.
  static constexpr double exhausted_below = -30.0;

  SearchTree(Sequence x_start, std::size_t depth);

  const Sequence& x_start() const { return x_start_; }
  std::size_t depth() const { return depth_; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::size_t node_count() const { return nodes_.size(); }
  double root_log_remaining() const { return nodes_.front().log_remaining; }
  bool exhausted() const { return dead(0); }
  bool dead(std::size_t i) const { return !(nodes_[i].log_remaining >= exhausted_below); }

  std::vector<EditAction> prefix(std::size_t i) const;
  // Expands every unexpanded node among `ids` with one model call.
  void expand(std::span<const std::size_t> ids, const TransitionModel& model);
  // Leaf reached by following `actions` from the root, if it exists.
  std::optional<std::size_t> find(std::span<const EditAction> actions) const;

  // Sets the trajectory's leaf mass to -inf and recomputes ancestors as the
  // log-sum of their children. Removing an already removed trajectory is a
  // no-op with a warning. Throws PreconditionError for an unknown trajectory.
  void remove_mass(const Trajectory& t);

 private:
  Sequence x_start_;
  std::size_t depth_;
  std::vector<Node> nodes_;
};

struct BeamItem {
  Trajectory trajectory;
  double logprob = 0.0;
  double perturbed = 0.0;
};

struct SampleBatch {
  std::vector<BeamItem> items;
  // Fewer than beta trajectories were left.
  bool exhausted = false;
};

// Maps independent perturbed values g_i with maximum Z onto values whose
// maximum is exactly T: g~ = -log(exp(-T) - exp(-Z) + exp(-g)), evaluated
// in a stable form. Throws StateError on an empty list.
std::vector<double> condition_gumbels(std::span<const double> perturbed, double T);

// Draws g_i = logp_i + Gumbel and conditions them on maximum T.
std::vector<double> conditional_child_gumbels(std::span<const double> child_logps, double T, Rng& rng);

// Stochastic beam search: the beta complete trajectories returned are
// distributed as sampling without replacement from the tree's remaining
// mass. Items come in descending perturbed order.
SampleBatch sbs_sample(SearchTree& tree, const TransitionModel& model, std::size_t beta, std::uint64_t seed);

// Deterministic beam search on prefix log-probability; removed leaves are
// skipped.
SampleBatch beam_search(SearchTree& tree, const TransitionModel& model, std::size_t beta);

// Removes every returned trajectory from the tree.
void remove_batch(SearchTree& tree, const SampleBatch& batch);

}  // namespace silo
