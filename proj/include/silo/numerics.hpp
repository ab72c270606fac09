#pragma once

// Minimal reverse-mode differentiation over dense row-major tensors. Values,
// gradients and every reduction are double precision with a fixed loop
// order, so repeated runs are bitwise identical.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace silo::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_count(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_count(shape), fill) {}
  Tensor(Shape s, std::vector<double> d);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using Gradients = std::map<std::string, Tensor>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // L2 penalty folded into the gradient before the moment updates.
  double weight_decay = 0.0;
};

// Named trainable tensors plus Adam moment accumulators and a step counter.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return slots_.count(name) != 0; }
  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;
  std::int64_t step() const { return step_; }

  // Values only; moments and step are ignored.
  bool same_values(const ParamStore& other) const;

 private:
  struct Slot {
    Tensor value, m, v;
  };
  std::map<std::string, Slot> slots_;
  std::int64_t step_ = 0;

  friend void adam_update(ParamStore&, const Gradients&, const AdamConfig&);
};

// One bias-corrected Adam step. Parameters missing from `grads` see a zero
// gradient. Throws TrainingError (leaving the store untouched) when any
// gradient entry is non-finite.
void adam_update(ParamStore& params, const Gradients& grads, const AdamConfig& cfg);

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  Var parameter(const ParamStore& store, const std::string& name);
  // Records an op result; backward receives the node id and accumulates into
  // the inputs' grads. Skipped entirely when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  Tensor& grad(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse.
  void backward(Var loss);
  Gradients gradients() const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    std::string param;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- primitives ------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var square(Var a);
Var relu(Var a);
Var tanh(Var a);
Var reshape(Var a, Shape shape);
Var sum(Var a);
Var mean(Var a);

// x[N, in] @ w[in, out] + b[out]
Var affine(Var x, Var w, Var b);
// x[B, L, Cin] * w[K, Cin, Cout] + b[Cout], zero "same" padding, odd K.
Var conv1d(Var x, Var w, Var b);
// Row-wise over x[N, D].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// table[V, D] rows selected by ids -> [ids.size(), D]
Var embedding(Var table, std::span<const std::size_t> ids);
// Multi-head scaled dot-product attention over q, k, v of shape [B*L, D].
Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads);

// Row-wise over x[N, C]. mask (N*C entries, nonzero = allowed) may be empty.
// Masked entries come out as -inf (log_softmax) or 0 (softmax) and receive
// no gradient. A row with nothing allowed throws StateError.
Var log_softmax(Var x, std::span<const std::uint8_t> mask = {});
Var softmax(Var x, std::span<const std::uint8_t> mask = {});
// x[N, C] -> [N] with y[n] = x[n, idx[n]]
Var pick(Var x, std::span<const std::size_t> idx);
// x[N, C] -> [R, C]
Var gather_rows(Var x, std::span<const std::size_t> rows);

// Runs `build` on a fresh tape, backpropagates the scalar it returns and
// collects gradients for every parameter it bound.
template <typename Build>
std::pair<double, Gradients> value_and_grad(Build&& build) {
  Tape tape;
  Var loss = build(tape);
  tape.backward(loss);
  return {loss.item(), tape.gradients()};
}

// ---- checkpoints -------------------------------------------------------------

// <stem>.bin holds little-endian float32 values of every tensor in name
// order; <stem>.json is the manifest of names, shapes and offsets.
void save_checkpoint(const std::filesystem::path& stem, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& stem);

}  // namespace silo::nn
