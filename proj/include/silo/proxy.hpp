#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "silo/datastore.hpp"
#include "silo/numerics.hpp"
#include "silo/scorer.hpp"

namespace silo {

struct ProxyConfig {
  std::size_t ensemble_size = 3;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 3000;
  // Consecutive per-epoch validation evaluations without improvement.
  std::size_t patience = 10;
  std::size_t channels = 32;
  std::size_t kernel = 5;
  double val_fraction = 0.1;
};

struct ProxyCurveRow {
  std::size_t epoch = 0;
  std::size_t member = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

// One-hot [B, L, V] encoding of a batch of sequences.
nn::Tensor one_hot(std::span<const Sequence> xs, std::size_t alphabet_size);

// Fresh parameters of one regressor: conv (kernel, V -> channels), ReLU,
// flatten over positions, affine to a scalar.
nn::ParamStore init_proxy_member(std::size_t length, std::size_t alphabet_size, const ProxyConfig& cfg,
                                 std::uint64_t seed);

// Forward graph of one member on a one-hot batch; returns [B, 1]. With
// `trainable` the parameters are bound for gradients.
nn::Var proxy_forward(nn::Tape& tape, const nn::ParamStore& params, const nn::Tensor& onehot, bool trainable);

// Ensemble regressor trained by squared error. Targets are standardised
// with the training-split mean and standard deviation; outputs are mapped
// back to fitness units.
class ProxyEnsemble : public Scorer {
 public:
  static ProxyEnsemble train(const LabeledDataset& d, const ProxyConfig& cfg, std::uint64_t seed,
                             std::size_t alphabet_size, std::vector<ProxyCurveRow>* curve = nullptr);

  std::vector<Prediction> predict_batch(std::span<const Sequence> xs) const override;
  // Raw output of every member, in fitness units.
  std::vector<std::vector<double>> member_outputs(std::span<const Sequence> xs) const;

  const std::vector<nn::ParamStore>& members() const { return members_; }
  std::size_t length() const { return length_; }
  // MSE of the ensemble mean on the held-out split, fitness units.
  double validation_mse() const;
  const LabeledDataset& validation_set() const { return val_; }

  void save(const std::filesystem::path& stem) const;

 private:
  ProxyEnsemble() = default;

  std::vector<nn::ParamStore> members_;
  std::size_t length_ = 0;
  std::size_t alphabet_size_ = 0;
  double label_mean_ = 0.0;
  double label_scale_ = 1.0;
  LabeledDataset val_;
};

}  // namespace silo
