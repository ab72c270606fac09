#include "silo/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "silo/errors.hpp"
#include "silo/parallel.hpp"
#include "silo/rng.hpp"

namespace silo {

nn::Tensor one_hot(std::span<const Sequence> xs, std::size_t alphabet_size) {
  if (xs.empty()) throw StateError("one_hot of an empty batch");
  const auto L = xs.front().size();
  nn::Tensor t({xs.size(), L, alphabet_size});
  for (std::size_t b = 0; b < xs.size(); ++b) {
    if (xs[b].size() != L) throw DimensionError("one_hot: sequences of differing length in one batch");
    for (std::size_t l = 0; l < L; ++l) {
      if (xs[b][l] >= alphabet_size) throw BoundsError("one_hot: residue outside alphabet");
      t.data[(b * L + l) * alphabet_size + xs[b][l]] = 1.0;
    }
  }
  return t;
}

namespace {

nn::Tensor uniform_init(nn::Shape shape, double bound, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.data) v = (2.0 * rng.uniform_open() - 1.0) * bound;
  return t;
}

}  // namespace

nn::ParamStore init_proxy_member(std::size_t length, std::size_t alphabet_size, const ProxyConfig& cfg,
                                 std::uint64_t seed) {
  if (cfg.kernel % 2 == 0) throw ConfigError("proxy kernel size must be odd");
  if (cfg.channels == 0) throw ConfigError("proxy needs at least one channel");
  Rng rng(seed);
  nn::ParamStore p;
  const double conv_fan_in = static_cast<double>(cfg.kernel * alphabet_size);
  p.add("conv.w", uniform_init({cfg.kernel, alphabet_size, cfg.channels}, std::sqrt(6.0 / conv_fan_in), rng));
  p.add("conv.b", nn::Tensor({cfg.channels}));
  const double head_fan_in = static_cast<double>(length * cfg.channels);
  p.add("head.w", uniform_init({length * cfg.channels, 1}, std::sqrt(3.0 / head_fan_in), rng));
  p.add("head.b", nn::Tensor({1}));
  return p;
}

nn::Var proxy_forward(nn::Tape& tape, const nn::ParamStore& params, const nn::Tensor& onehot, bool trainable) {
  auto bind = [&](const char* name) {
    return trainable ? tape.parameter(params, name) : tape.constant(params.value(name));
  };
  const auto B = onehot.dim(0), L = onehot.dim(1);
  auto x = tape.constant(onehot);
  auto h = nn::relu(nn::conv1d(x, bind("conv.w"), bind("conv.b")));
  const auto C = h.shape()[2];
  auto flat = nn::reshape(h, {B, L * C});
  return nn::affine(flat, bind("head.w"), bind("head.b"));
}

namespace {

struct MemberResult {
  nn::ParamStore params;
  std::vector<ProxyCurveRow> curve;
};

std::vector<double> forward_values(const nn::ParamStore& params, const nn::Tensor& onehot) {
  nn::Tape tape;
  return proxy_forward(tape, params, onehot, false).value().data;
}

MemberResult train_member(std::size_t member, const std::vector<Sequence>& train_x, const std::vector<double>& train_y,
                          const nn::Tensor& val_onehot, const std::vector<double>& val_y, std::size_t alphabet_size,
                          double unit_scale, const ProxyConfig& cfg, std::uint64_t seed) {
  const auto L = train_x.front().size();
  MemberResult result{init_proxy_member(L, alphabet_size, cfg, derive_seed(seed, "init", {member})), {}};
  Rng shuffle_rng(derive_seed(seed, "shuffle", {member}));
  const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

  nn::ParamStore best = result.params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), 0);
  const double to_units = unit_scale * unit_scale;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    double sse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Sequence> bx;
      nn::Tensor by({end - start, 1});
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(train_x[order[i]]);
        by.data[i - start] = train_y[order[i]];
      }
      const auto onehot = one_hot(bx, alphabet_size);
      auto [loss, grads] = nn::value_and_grad([&](nn::Tape& tape) {
        auto pred = proxy_forward(tape, result.params, onehot, true);
        return nn::mean(nn::square(nn::sub(pred, tape.constant(by))));
      });
      if (!std::isfinite(loss)) throw TrainingError("proxy member " + std::to_string(member) + ": non-finite loss");
      sse += loss * static_cast<double>(end - start);
      nn::adam_update(result.params, grads, adam);
    }
    const auto pred = forward_values(result.params, val_onehot);
    double val = 0.0;
    for (std::size_t i = 0; i < val_y.size(); ++i) val += (pred[i] - val_y[i]) * (pred[i] - val_y[i]);
    val /= static_cast<double>(val_y.size());
    if (!std::isfinite(val)) throw TrainingError("proxy member " + std::to_string(member) + ": non-finite validation loss");
    result.curve.push_back({epoch, member, sse / static_cast<double>(order.size()) * to_units, val * to_units});
    if (val < best_val) {
      best_val = val;
      best = result.params;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

}  // namespace

ProxyEnsemble ProxyEnsemble::train(const LabeledDataset& d, const ProxyConfig& cfg, std::uint64_t seed,
                                   std::size_t alphabet_size, std::vector<ProxyCurveRow>* curve) {
  if (cfg.ensemble_size < 1) throw ConfigError("proxy ensemble needs at least one member");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 1) throw ConfigError("proxy batch/epochs/patience must be >= 1");
  if (d.size() < 2) throw StateError("proxy training needs at least 2 labelled sequences");

  auto [train_set, val_set] = split_train_val(d, cfg.val_fraction, derive_seed(seed, "split"));

  ProxyEnsemble e;
  e.length_ = d[0].sequence.size();
  e.alphabet_size_ = alphabet_size;

  double mean = 0.0;
  for (const auto& entry : train_set.entries()) mean += entry.fitness;
  mean /= static_cast<double>(train_set.size());
  double var = 0.0;
  for (const auto& entry : train_set.entries()) var += (entry.fitness - mean) * (entry.fitness - mean);
  var /= static_cast<double>(train_set.size());
  e.label_mean_ = mean;
  e.label_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;

  std::vector<Sequence> train_x, val_x;
  std::vector<double> train_y, val_y;
  for (const auto& entry : train_set.entries()) {
    train_x.push_back(entry.sequence);
    train_y.push_back((entry.fitness - e.label_mean_) / e.label_scale_);
  }
  for (const auto& entry : val_set.entries()) {
    val_x.push_back(entry.sequence);
    val_y.push_back((entry.fitness - e.label_mean_) / e.label_scale_);
  }
  const auto val_onehot = one_hot(val_x, alphabet_size);

  std::vector<MemberResult> results(cfg.ensemble_size);
  parallel_for(cfg.ensemble_size, [&](std::size_t m) {
    results[m] = train_member(m, train_x, train_y, val_onehot, val_y, alphabet_size, e.label_scale_, cfg, seed);
  });
  for (auto& r : results) {
    e.members_.push_back(std::move(r.params));
    if (curve) curve->insert(curve->end(), r.curve.begin(), r.curve.end());
  }
  e.val_ = std::move(val_set);
  return e;
}

std::vector<std::vector<double>> ProxyEnsemble::member_outputs(std::span<const Sequence> xs) const {
  std::vector<std::vector<double>> out(xs.size(), std::vector<double>(members_.size()));
  if (xs.empty()) return out;
  for (const auto& x : xs)
    if (x.size() != length_)
      throw DimensionError("proxy expects length " + std::to_string(length_) + ", got " + std::to_string(x.size()));
  constexpr std::size_t chunk = 512;
  for (std::size_t start = 0; start < xs.size(); start += chunk) {
    const auto part = xs.subspan(start, std::min(chunk, xs.size() - start));
    const auto onehot = one_hot(part, alphabet_size_);
    for (std::size_t m = 0; m < members_.size(); ++m) {
      const auto raw = forward_values(members_[m], onehot);
      for (std::size_t i = 0; i < part.size(); ++i) out[start + i][m] = label_mean_ + label_scale_ * raw[i];
    }
  }
  return out;
}

std::vector<Prediction> ProxyEnsemble::predict_batch(std::span<const Sequence> xs) const {
  std::vector<Prediction> out;
  out.reserve(xs.size());
  for (const auto& outputs : member_outputs(xs)) out.push_back(combine_members(outputs));
  return out;
}

double ProxyEnsemble::validation_mse() const {
  std::vector<Sequence> xs;
  for (const auto& entry : val_.entries()) xs.push_back(entry.sequence);
  const auto preds = predict_batch(xs);
  double mse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) mse += (preds[i].mu - val_[i].fitness) * (preds[i].mu - val_[i].fitness);
  return mse / static_cast<double>(xs.size());
}

void ProxyEnsemble::save(const std::filesystem::path& stem) const {
  nn::ParamStore all;
  for (std::size_t m = 0; m < members_.size(); ++m)
    for (const auto& name : members_[m].names())
      all.add("member" + std::to_string(m) + "/" + name, members_[m].value(name));
  all.add("label_mean", nn::Tensor({1}, label_mean_));
  all.add("label_scale", nn::Tensor({1}, label_scale_));
  nn::save_checkpoint(stem, all);
}

}  // namespace silo
