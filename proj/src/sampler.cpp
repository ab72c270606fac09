#include "silo/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "silo/errors.hpp"
#include "silo/log.hpp"

namespace silo {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// log(1 - exp(a)) for a <= 0.
double log1mexp(double a) {
  if (a >= 0.0) return neg_inf;
  return a > -std::log(2.0) ? std::log(-std::expm1(a)) : std::log1p(-std::exp(a));
}

double logsumexp(std::span<const double> xs) {
  double hi = neg_inf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == neg_inf) return neg_inf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

}  // namespace

std::vector<std::vector<ChildEdge>> PolicyTransition::expand(std::span<const std::vector<EditAction>> prefixes) const {
  std::vector<EpisodeState> states;
  states.reserve(prefixes.size());
  for (const auto& prefix : prefixes) {
    auto s = EpisodeState::start(x_start_);
    for (const auto& a : prefix) s = s.advance(a, policy_.alphabet());
    states.push_back(std::move(s));
  }
  const auto lps = policy_.log_probs(states);
  const auto L = policy_.length(), V = policy_.alphabet().size();
  std::vector<std::vector<ChildEdge>> out(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    for (std::size_t l = 0; l < L; ++l) {
      if (states[b].edited[l]) continue;
      for (std::size_t r = 0; r < V; ++r) {
        if (r == states[b].current[l]) continue;
        out[b].push_back({{l, static_cast<Residue>(r)}, lps[b].position[l] + lps[b].residue[l * V + r]});
      }
    }
  }
  return out;
}

SearchTree::SearchTree(Sequence x_start, std::size_t depth) : x_start_(std::move(x_start)), depth_(depth) {
  if (depth_ == 0) throw PreconditionError("search tree depth must be >= 1");
  nodes_.push_back(Node{});
}

std::vector<EditAction> SearchTree::prefix(std::size_t i) const {
  std::vector<EditAction> actions(nodes_[i].depth);
  for (std::size_t n = i; n != 0; n = nodes_[n].parent) actions[nodes_[n].depth - 1] = nodes_[n].action;
  return actions;
}

void SearchTree::expand(std::span<const std::size_t> ids, const TransitionModel& model) {
  std::vector<std::size_t> todo;
  std::vector<std::vector<EditAction>> prefixes;
  for (auto id : ids) {
    if (nodes_[id].expanded || nodes_[id].depth >= depth_) continue;
    if (std::find(todo.begin(), todo.end(), id) != todo.end()) continue;
    todo.push_back(id);
    prefixes.push_back(prefix(id));
  }
  if (todo.empty()) return;
  const auto edges = model.expand(prefixes);
  if (edges.size() != todo.size()) throw StateError("transition model returned the wrong number of expansions");
  for (std::size_t j = 0; j < todo.size(); ++j) {
    const auto id = todo[j];
    for (const auto& e : edges[j]) {
      if (e.logp == neg_inf) continue;
      Node child;
      child.parent = id;
      child.action = e.action;
      child.depth = nodes_[id].depth + 1;
      child.logp = nodes_[id].logp + e.logp;
      child.log_remaining = child.logp;
      nodes_.push_back(std::move(child));
      nodes_[id].children.push_back(nodes_.size() - 1);
    }
    nodes_[id].expanded = true;
  }
}

std::optional<std::size_t> SearchTree::find(std::span<const EditAction> actions) const {
  std::size_t n = 0;
  for (const auto& a : actions) {
    const auto& kids = nodes_[n].children;
    auto it = std::find_if(kids.begin(), kids.end(), [&](std::size_t c) { return nodes_[c].action == a; });
    if (it == kids.end()) return std::nullopt;
    n = *it;
  }
  return n;
}

void SearchTree::remove_mass(const Trajectory& t) {
  if (t.start_hash != x_start_.hash()) throw PreconditionError("trajectory does not belong to this tree");
  const auto leaf = find(t.actions);
  if (!leaf || nodes_[*leaf].depth != depth_) throw PreconditionError("trajectory is not a leaf of this tree");
  if (nodes_[*leaf].log_remaining == neg_inf) {
    log::warn("remove_mass: trajectory already removed");
    return;
  }
  nodes_[*leaf].log_remaining = neg_inf;
  for (std::size_t n = *leaf; n != 0;) {
    n = nodes_[n].parent;
    std::vector<double> masses;
    masses.reserve(nodes_[n].children.size());
    for (auto c : nodes_[n].children) masses.push_back(nodes_[c].log_remaining);
    nodes_[n].log_remaining = logsumexp(masses);
  }
}

std::vector<double> condition_gumbels(std::span<const double> perturbed, double T) {
  if (perturbed.empty()) throw StateError("conditioning needs at least one child");
  const double Z = *std::max_element(perturbed.begin(), perturbed.end());
  std::vector<double> out;
  out.reserve(perturbed.size());
  for (double g : perturbed) {
    const double v = T - g + log1mexp(g - Z);
    out.push_back(T - std::max(v, 0.0) - std::log1p(std::exp(-std::abs(v))));
  }
  return out;
}

std::vector<double> conditional_child_gumbels(std::span<const double> child_logps, double T, Rng& rng) {
  if (child_logps.empty()) throw StateError("conditioning needs at least one child");
  std::vector<double> g;
  g.reserve(child_logps.size());
  for (double lp : child_logps) g.push_back(lp + rng.gumbel());
  return condition_gumbels(g, T);
}

namespace {

struct Entry {
  std::size_t node;
  double key;
};

SampleBatch search(SearchTree& tree, const TransitionModel& model, std::size_t beta, Rng* rng) {
  if (beta == 0) throw PreconditionError("beam width must be >= 1");
  SampleBatch out;
  if (tree.exhausted()) {
    out.exhausted = true;
    return out;
  }
  std::vector<Entry> beam{{0, rng ? tree.root_log_remaining() + rng->gumbel() : 0.0}};
  for (std::size_t level = 0; level < tree.depth() && !beam.empty(); ++level) {
    std::vector<std::size_t> ids;
    for (const auto& e : beam) ids.push_back(e.node);
    tree.expand(ids, model);
    std::vector<Entry> next;
    for (const auto& e : beam) {
      std::vector<std::size_t> alive;
      std::vector<double> locs;
      for (auto c : tree.node(e.node).children) {
        if (tree.dead(c)) continue;
        alive.push_back(c);
        locs.push_back(tree.node(c).log_remaining);
      }
      if (alive.empty()) continue;
      if (rng) {
        const auto keys = conditional_child_gumbels(locs, e.key, *rng);
        for (std::size_t i = 0; i < alive.size(); ++i) next.push_back({alive[i], keys[i]});
      } else {
        for (auto c : alive) next.push_back({c, tree.node(c).logp});
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Entry& a, const Entry& b) { return a.key > b.key; });
    if (next.size() > beta) next.resize(beta);
    beam = std::move(next);
  }
  for (const auto& e : beam) {
    const auto& n = tree.node(e.node);
    Trajectory t{tree.x_start().hash(), tree.prefix(e.node), n.logp};
    out.items.push_back({std::move(t), n.logp, e.key});
  }
  out.exhausted = out.items.size() < beta;
  return out;
}

}  // namespace

SampleBatch sbs_sample(SearchTree& tree, const TransitionModel& model, std::size_t beta, std::uint64_t seed) {
  Rng rng(seed);
  return search(tree, model, beta, &rng);
}

SampleBatch beam_search(SearchTree& tree, const TransitionModel& model, std::size_t beta) {
  return search(tree, model, beta, nullptr);
}

void remove_batch(SearchTree& tree, const SampleBatch& batch) {
  for (const auto& item : batch.items) tree.remove_mass(item.trajectory);
}

}  // namespace silo
