#pragma once

// Helpers shared by the unit suites and the acceptance binary: explicit toy
// MDPs, independent reference computations and a finite-difference checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "silo/numerics.hpp"
#include "silo/sampler.hpp"

namespace silo::testing {

// Transition model given by an explicit table prefix -> children.
class TableTransition : public TransitionModel {
 public:
  explicit TableTransition(std::map<std::vector<EditAction>, std::vector<ChildEdge>> table) : table_(std::move(table)) {}

  std::vector<std::vector<ChildEdge>> expand(std::span<const std::vector<EditAction>> prefixes) const override {
    std::vector<std::vector<ChildEdge>> out;
    for (const auto& p : prefixes) {
      auto it = table_.find(p);
      out.push_back(it == table_.end() ? std::vector<ChildEdge>{} : it->second);
    }
    ++calls;
    return out;
  }

  mutable std::size_t calls = 0;

 private:
  std::map<std::vector<EditAction>, std::vector<ChildEdge>> table_;
};

inline EditAction act(std::size_t pos, Residue r) { return {pos, r}; }

// Two-step binary tree: first action (0, r0), second (1, r1), with
// P(r0 = 0) = p_root, P(r1 = 0 | r0 = 0) = p_left, P(r1 = 0 | r0 = 1) = p_right.
inline TableTransition two_step_tree(double p_root, double p_left, double p_right) {
  std::map<std::vector<EditAction>, std::vector<ChildEdge>> t;
  t[{}] = {{act(0, 0), std::log(p_root)}, {act(0, 1), std::log(1 - p_root)}};
  t[{act(0, 0)}] = {{act(1, 0), std::log(p_left)}, {act(1, 1), std::log(1 - p_left)}};
  t[{act(0, 1)}] = {{act(1, 0), std::log(p_right)}, {act(1, 1), std::log(1 - p_right)}};
  return TableTransition(std::move(t));
}

// Uniform 2-step binary toy: four trajectories of probability 0.25.
inline TableTransition uniform_toy() { return two_step_tree(0.5, 0.5, 0.5); }

// Trajectory probabilities [0.4, 0.3, 0.2, 0.1] for leaves 00, 01, 10, 11.
inline TableTransition skewed_toy() { return two_step_tree(0.7, 4.0 / 7.0, 2.0 / 3.0); }

// Leaf index 0..3 of a two-step trajectory (r0 * 2 + r1).
inline std::size_t leaf_index(const Trajectory& t) { return t.actions.at(0).residue * 2 + t.actions.at(1).residue; }

// Upper-tail p-value of Pearson's statistic for observed counts against
// expected probabilities.
inline double chi_square_p(const std::vector<double>& observed, const std::vector<double>& probs) {
  double total = 0.0;
  for (double o : observed) total += o;
  double stat = 0.0;
  std::size_t dof = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    const double e = total * probs[i];
    stat += (observed[i] - e) * (observed[i] - e) / e;
    ++dof;
  }
  boost::math::chi_squared dist(static_cast<double>(dof - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// Sequential sampling without replacement by direct categorical draws.
inline std::vector<std::size_t> swor_draw(std::vector<double> probs, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  for (std::size_t step = 0; step < k; ++step) {
    double total = 0.0;
    for (double p : probs) total += p;
    std::uniform_real_distribution<double> u(0.0, total);
    double x = u(rng), acc = 0.0;
    std::size_t pick = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (probs[i] > 0.0 && x < acc) {
        pick = i;
        break;
      }
    }
    out.push_back(pick);
    probs[pick] = 0.0;
  }
  return out;
}

// Exact probability that (i, j) are the first two draws without replacement.
inline double swor_pair_prob(const std::vector<double>& probs, std::size_t i, std::size_t j) {
  if (i == j) return 0.0;
  return probs[i] * probs[j] / (1.0 - probs[i]);
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences (eps 1e-4) against the tape gradient for every entry
// of every parameter, or a strided subset of at most `per_param` entries.
inline GradCheck check_gradients(nn::ParamStore& params, const std::function<nn::Var(nn::Tape&)>& build,
                                 std::size_t per_param = 0, double eps = 1e-4) {
  auto [loss, grads] = nn::value_and_grad(build);
  (void)loss;
  auto eval = [&] {
    nn::Tape tape;
    return build(tape).item();
  };
  GradCheck out;
  for (const auto& name : params.names()) {
    auto& value = params.value(name);
    const auto n = value.numel();
    const std::size_t stride = per_param == 0 || n <= per_param ? 1 : n / per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = value[i];
      value[i] = orig + eps;
      const double up = eval();
      value[i] = orig - eps;
      const double down = eval();
      value[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = grads.count(name) ? grads.at(name)[i] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

inline nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  nn::Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.data) v = n(rng);
  return t;
}

}  // namespace silo::testing
