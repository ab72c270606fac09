#include "silo/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "silo/errors.hpp"

namespace silo::nn {

std::size_t shape_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != shape_count(shape))
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(shape));
}

// ---- ParamStore / Adam -------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw StateError("duplicate parameter " + name);
  Slot slot{init, Tensor(init.shape), Tensor(init.shape)};
  return slots_.emplace(name, std::move(slot)).first->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw StateError("unknown parameter " + name);
  return it->second.value;
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw StateError("unknown parameter " + name);
  return it->second.value;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : slots_) out.push_back(name);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, slot] : slots_) n += slot.value.numel();
  return n;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (slots_.size() != other.slots_.size()) return false;
  for (const auto& [name, slot] : slots_) {
    auto it = other.slots_.find(name);
    if (it == other.slots_.end() || !(it->second.value == slot.value)) return false;
  }
  return true;
}

void adam_update(ParamStore& params, const Gradients& grads, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    auto it = params.slots_.find(name);
    if (it == params.slots_.end()) throw StateError("gradient for unknown parameter " + name);
    if (g.shape != it->second.value.shape) throw DimensionError("gradient shape mismatch for " + name);
    for (double v : g.data)
      if (!std::isfinite(v)) throw TrainingError("non-finite gradient for parameter " + name);
  }
  params.step_ += 1;
  const double t = static_cast<double>(params.step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, slot] : params.slots_) {
    auto it = grads.find(name);
    const Tensor* g = it == grads.end() ? nullptr : &it->second;
    for (std::size_t i = 0; i < slot.value.numel(); ++i) {
      double gi = (g ? g->data[i] : 0.0) + cfg.weight_decay * slot.value.data[i];
      slot.m.data[i] = cfg.beta1 * slot.m.data[i] + (1.0 - cfg.beta1) * gi;
      slot.v.data[i] = cfg.beta2 * slot.v.data[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = slot.m.data[i] / bc1;
      const double vhat = slot.v.data[i] / bc2;
      slot.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---- Tape --------------------------------------------------------------------

const Tensor& Var::value() const {
  if (!tape_) throw StateError("unbound Var");
  return tape_->value(id_);
}

double Var::item() const {
  const auto& v = value();
  if (v.numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(v.shape));
  return v.data[0];
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const ParamStore& store, const std::string& name) {
  nodes_.push_back(Node{store.value(name), {}, {}, name, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const auto& v : inputs) {
    if (v.tape_ != this) throw StateError("op mixes Vars from different tapes");
    needs = needs || nodes_[v.id_].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, {}, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.numel() != node.value.numel()) node.grad = Tensor(node.value.shape);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw StateError("backward on a Var from another tape");
  if (nodes_[loss.id_].value.numel() != 1) throw DimensionError("backward needs a scalar loss");
  grad(loss.id_).data[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backward && node.grad.numel() == node.value.numel()) node.backward(*this, i);
  }
}

Gradients Tape::gradients() const {
  Gradients out;
  for (const auto& node : nodes_) {
    if (node.param.empty()) continue;
    Tensor g = node.grad.numel() == node.value.numel() ? node.grad : Tensor(node.value.shape);
    auto [it, inserted] = out.emplace(node.param, g);
    if (!inserted)
      for (std::size_t i = 0; i < g.numel(); ++i) it->second.data[i] += g.data[i];
  }
  return out;
}

// ---- primitives ----------------------------------------------------------------

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw DimensionError(std::string(op) + ": " + what);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape == b.shape, op, "shapes " + shape_string(a.shape) + " and " + shape_string(b.shape));
}

}  // namespace

Var add(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same(av, bv, "add");
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] + bv.data[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (auto id : {ia, ib}) {
      if (!t.needs_grad(id)) continue;
      auto& gi = t.grad(id);
      for (std::size_t i = 0; i < g.numel(); ++i) gi.data[i] += g.data[i];
    }
  });
}

Var sub(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same(av, bv, "sub");
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] - bv.data[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] -= g.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same(av, bv, "mul");
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] * bv.data[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (t.needs_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * bv.data[i];
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * av.data[i];
    }
  });
}

Var scale(Var a, double s) {
  const auto& av = a.value();
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] * s;
  const auto ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia, s](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * s;
  });
}

Var square(Var a) { return mul(a, a); }

Var relu(Var a) {
  const auto& av = a.value();
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] > 0.0 ? av.data[i] : 0.0;
  const auto ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x.data[i] > 0.0) ga.data[i] += g.data[i];
  });
}

Var tanh(Var a) {
  const auto& av = a.value();
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = std::tanh(av.data[i]);
  const auto ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Var reshape(Var a, Shape shape) {
  const auto& av = a.value();
  require(shape_count(shape) == av.numel(), "reshape",
          shape_string(av.shape) + " cannot become " + shape_string(shape));
  Tensor y(std::move(shape), av.data);
  const auto ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
  });
}

Var sum(Var a) {
  const auto& av = a.value();
  double s = 0.0;
  for (double v : av.data) s += v;
  const auto ia = a.id();
  return a.tape()->record(Tensor({1}, s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0];
    auto& ga = t.grad(ia);
    for (auto& v : ga.data) v += g;
  });
}

Var mean(Var a) {
  const auto n = a.value().numel();
  require(n > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var affine(Var x, Var w, Var b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  require(xv.rank() == 2 && wv.rank() == 2 && bv.rank() == 1, "affine", "expects x[N,in], w[in,out], b[out]");
  const auto N = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
  require(wv.dim(0) == in && bv.dim(0) == out, "affine",
          "x " + shape_string(xv.shape) + " w " + shape_string(wv.shape) + " b " + shape_string(bv.shape));
  Tensor y({N, out});
  for (std::size_t n = 0; n < N; ++n) {
    double* yr = &y.data[n * out];
    for (std::size_t o = 0; o < out; ++o) yr[o] = bv.data[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xv.data[n * in + i];
      if (xi == 0.0) continue;
      const double* wr = &wv.data[i * out];
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
    }
  }
  const auto ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record(std::move(y), {x, w, b}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ix);
    const auto& wv = t.value(iw);
    if (t.needs_grad(ix)) {
      auto& gx = t.grad(ix);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < in; ++i) {
          const double* wr = &wv.data[i * out];
          const double* gr = &g.data[n * out];
          double s = 0.0;
          for (std::size_t o = 0; o < out; ++o) s += gr[o] * wr[o];
          gx.data[n * in + i] += s;
        }
    }
    if (t.needs_grad(iw)) {
      auto& gw = t.grad(iw);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < in; ++i) {
          const double xi = xv.data[n * in + i];
          if (xi == 0.0) continue;
          double* gwr = &gw.data[i * out];
          const double* gr = &g.data[n * out];
          for (std::size_t o = 0; o < out; ++o) gwr[o] += xi * gr[o];
        }
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < out; ++o) gb.data[o] += g.data[n * out + o];
    }
  });
}

Var conv1d(Var x, Var w, Var b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  require(xv.rank() == 3 && wv.rank() == 3 && bv.rank() == 1, "conv1d", "expects x[B,L,Cin], w[K,Cin,Cout], b[Cout]");
  const auto B = xv.dim(0), L = xv.dim(1), Cin = xv.dim(2);
  const auto K = wv.dim(0), Cout = wv.dim(2);
  require(wv.dim(1) == Cin && bv.dim(0) == Cout, "conv1d",
          "x " + shape_string(xv.shape) + " w " + shape_string(wv.shape) + " b " + shape_string(bv.shape));
  require(K % 2 == 1, "conv1d", "kernel size must be odd");
  const auto pad = static_cast<std::ptrdiff_t>(K / 2);
  Tensor y({B, L, Cout});
  for (std::size_t bi = 0; bi < B; ++bi)
    for (std::size_t l = 0; l < L; ++l) {
      double* yr = &y.data[(bi * L + l) * Cout];
      for (std::size_t o = 0; o < Cout; ++o) yr[o] = bv.data[o];
      for (std::size_t k = 0; k < K; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
        const double* xr = &xv.data[(bi * L + static_cast<std::size_t>(src)) * Cin];
        for (std::size_t c = 0; c < Cin; ++c) {
          const double xc = xr[c];
          if (xc == 0.0) continue;
          const double* wr = &wv.data[(k * Cin + c) * Cout];
          for (std::size_t o = 0; o < Cout; ++o) yr[o] += xc * wr[o];
        }
      }
    }
  const auto ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record(std::move(y), {x, w, b}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(ix);
    const auto& wv = t.value(iw);
    const bool gx_on = t.needs_grad(ix), gw_on = t.needs_grad(iw);
    Tensor* gx = gx_on ? &t.grad(ix) : nullptr;
    Tensor* gw = gw_on ? &t.grad(iw) : nullptr;
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t l = 0; l < L; ++l) {
        const double* gr = &g.data[(bi * L + l) * Cout];
        for (std::size_t k = 0; k < K; ++k) {
          const auto src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(k) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
          const std::size_t row = (bi * L + static_cast<std::size_t>(src)) * Cin;
          for (std::size_t c = 0; c < Cin; ++c) {
            const std::size_t wrow = (k * Cin + c) * Cout;
            if (gx) {
              double s = 0.0;
              for (std::size_t o = 0; o < Cout; ++o) s += gr[o] * wv.data[wrow + o];
              gx->data[row + c] += s;
            }
            if (gw) {
              const double xc = xv.data[row + c];
              if (xc == 0.0) continue;
              for (std::size_t o = 0; o < Cout; ++o) gw->data[wrow + o] += xc * gr[o];
            }
          }
        }
      }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t r = 0; r < B * L; ++r)
        for (std::size_t o = 0; o < Cout; ++o) gb.data[o] += g.data[r * Cout + o];
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  require(xv.rank() == 2, "layer_norm", "expects x[N,D]");
  const auto N = xv.dim(0), D = xv.dim(1);
  require(gv.shape == Shape{D} && bv.shape == Shape{D}, "layer_norm", "gamma/beta must be [D]");
  Tensor y({N, D});
  // xhat and 1/std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(N * D);
  auto inv_std = std::make_shared<std::vector<double>>(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double* xr = &xv.data[n * D];
    double mu = 0.0;
    for (std::size_t d = 0; d < D; ++d) mu += xr[d];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) var += (xr[d] - mu) * (xr[d] - mu);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[n] = is;
    for (std::size_t d = 0; d < D; ++d) {
      const double h = (xr[d] - mu) * is;
      (*xhat)[n * D + d] = h;
      y.data[n * D + d] = h * gv.data[d] + bv.data[d];
    }
  }
  const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape()->record(std::move(y), {x, gamma, beta}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& gv = t.value(ig);
    if (t.needs_grad(ig)) {
      auto& gg = t.grad(ig);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t d = 0; d < D; ++d) gg.data[d] += g.data[n * D + d] * (*xhat)[n * D + d];
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t d = 0; d < D; ++d) gb.data[d] += g.data[n * D + d];
    }
    if (t.needs_grad(ix)) {
      auto& gx = t.grad(ix);
      std::vector<double> dh(D);
      for (std::size_t n = 0; n < N; ++n) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          dh[d] = g.data[n * D + d] * gv.data[d];
          m1 += dh[d];
          m2 += dh[d] * (*xhat)[n * D + d];
        }
        m1 /= static_cast<double>(D);
        m2 /= static_cast<double>(D);
        for (std::size_t d = 0; d < D; ++d)
          gx.data[n * D + d] += (*inv_std)[n] * (dh[d] - m1 - (*xhat)[n * D + d] * m2);
      }
    }
  });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
  const auto& tv = table.value();
  require(tv.rank() == 2, "embedding", "expects table[V,D]");
  const auto V = tv.dim(0), D = tv.dim(1);
  Tensor y({ids.size(), D});
  for (std::size_t n = 0; n < ids.size(); ++n) {
    require(ids[n] < V, "embedding", "id " + std::to_string(ids[n]) + " outside table of " + std::to_string(V));
    std::copy_n(&tv.data[ids[n] * D], D, &y.data[n * D]);
  }
  const auto it = table.id();
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.tape()->record(std::move(y), {table}, [it, D, idv = std::move(idv)](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gt = t.grad(it);
    for (std::size_t n = 0; n < idv.size(); ++n)
      for (std::size_t d = 0; d < D; ++d) gt.data[idv[n] * D + d] += g.data[n * D + d];
  });
}

Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  require(qv.rank() == 2 && qv.shape == kv.shape && qv.shape == vv.shape, "attention",
          "q, k, v must share shape [B*L, D]");
  require(batch > 0 && qv.dim(0) % batch == 0, "attention", "rows not divisible by batch");
  const auto L = qv.dim(0) / batch, D = qv.dim(1);
  require(heads > 0 && D % heads == 0, "attention", "latent dim not divisible by heads");
  const auto dh = D / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<double>>(batch * heads * L * L);
  Tensor y({batch * L, D});
  std::vector<double> row(L);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      double* P = &(*probs)[((b * heads) + h) * L * L];
      for (std::size_t i = 0; i < L; ++i) {
        const double* qi = &qv.data[(b * L + i) * D + h * dh];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          const double* kj = &kv.data[(b * L + j) * D + h * dh];
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
          row[j] = s * sc;
          mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        double* yi = &y.data[(b * L + i) * D + h * dh];
        for (std::size_t j = 0; j < L; ++j) {
          const double p = row[j] / z;
          P[i * L + j] = p;
          const double* vj = &vv.data[(b * L + j) * D + h * dh];
          for (std::size_t d = 0; d < dh; ++d) yi[d] += p * vj[d];
        }
      }
    }
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape()->record(std::move(y), {q, k, v}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& qv = t.value(iq);
    const auto& kv = t.value(ik);
    const auto& vv = t.value(iv);
    Tensor* gq = t.needs_grad(iq) ? &t.grad(iq) : nullptr;
    Tensor* gk = t.needs_grad(ik) ? &t.grad(ik) : nullptr;
    Tensor* gv = t.needs_grad(iv) ? &t.grad(iv) : nullptr;
    std::vector<double> dP(L), dS(L);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h) {
        const double* P = &(*probs)[((b * heads) + h) * L * L];
        for (std::size_t i = 0; i < L; ++i) {
          const double* gi = &g.data[(b * L + i) * D + h * dh];
          double dot = 0.0;
          for (std::size_t j = 0; j < L; ++j) {
            const double* vj = &vv.data[(b * L + j) * D + h * dh];
            double s = 0.0;
            for (std::size_t d = 0; d < dh; ++d) s += gi[d] * vj[d];
            dP[j] = s;
            dot += P[i * L + j] * s;
            if (gv) {
              double* gvj = &gv->data[(b * L + j) * D + h * dh];
              for (std::size_t d = 0; d < dh; ++d) gvj[d] += P[i * L + j] * gi[d];
            }
          }
          for (std::size_t j = 0; j < L; ++j) dS[j] = P[i * L + j] * (dP[j] - dot) * sc;
          const double* qi = &qv.data[(b * L + i) * D + h * dh];
          for (std::size_t j = 0; j < L; ++j) {
            const double* kj = &kv.data[(b * L + j) * D + h * dh];
            if (gq) {
              double* gqi = &gq->data[(b * L + i) * D + h * dh];
              for (std::size_t d = 0; d < dh; ++d) gqi[d] += dS[j] * kj[d];
            }
            if (gk) {
              double* gkj = &gk->data[(b * L + j) * D + h * dh];
              for (std::size_t d = 0; d < dh; ++d) gkj[d] += dS[j] * qi[d];
            }
          }
        }
      }
  });
}

namespace {

std::vector<std::uint8_t> checked_mask(const Tensor& x, std::span<const std::uint8_t> mask, const char* op) {
  require(x.rank() == 2, op, "expects x[N,C]");
  if (mask.empty()) return std::vector<std::uint8_t>(x.numel(), 1);
  require(mask.size() == x.numel(), op, "mask size does not match " + shape_string(x.shape));
  return {mask.begin(), mask.end()};
}

// Row-wise masked log-softmax values; masked entries become -inf.
Tensor masked_log_softmax_values(const Tensor& x, const std::vector<std::uint8_t>& m) {
  const auto N = x.dim(0), C = x.dim(1);
  Tensor y({N, C});
  for (std::size_t n = 0; n < N; ++n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c)
      if (m[n * C + c]) mx = std::max(mx, x.data[n * C + c]);
    if (!std::isfinite(mx)) throw StateError("softmax row " + std::to_string(n) + " has no allowed entries");
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c)
      if (m[n * C + c]) z += std::exp(x.data[n * C + c] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < C; ++c)
      y.data[n * C + c] = m[n * C + c] ? x.data[n * C + c] - lz : -std::numeric_limits<double>::infinity();
  }
  return y;
}

}  // namespace

Var log_softmax(Var x, std::span<const std::uint8_t> mask) {
  auto m = checked_mask(x.value(), mask, "log_softmax");
  Tensor y = masked_log_softmax_values(x.value(), m);
  const auto N = y.dim(0), C = y.dim(1);
  const auto ix = x.id();
  return x.tape()->record(std::move(y), {x}, [=, m = std::move(m)](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(ix);
    for (std::size_t n = 0; n < N; ++n) {
      double gs = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        if (m[n * C + c]) gs += g.data[n * C + c];
      for (std::size_t c = 0; c < C; ++c)
        if (m[n * C + c]) gx.data[n * C + c] += g.data[n * C + c] - std::exp(y.data[n * C + c]) * gs;
    }
  });
}

Var softmax(Var x, std::span<const std::uint8_t> mask) {
  auto m = checked_mask(x.value(), mask, "softmax");
  Tensor y = masked_log_softmax_values(x.value(), m);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = m[i] ? std::exp(y.data[i]) : 0.0;
  const auto N = y.dim(0), C = y.dim(1);
  const auto ix = x.id();
  return x.tape()->record(std::move(y), {x}, [=, m = std::move(m)](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& p = t.value(self);
    auto& gx = t.grad(ix);
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        if (m[n * C + c]) dot += p.data[n * C + c] * g.data[n * C + c];
      for (std::size_t c = 0; c < C; ++c)
        if (m[n * C + c]) gx.data[n * C + c] += p.data[n * C + c] * (g.data[n * C + c] - dot);
    }
  });
}

Var pick(Var x, std::span<const std::size_t> idx) {
  const auto& xv = x.value();
  require(xv.rank() == 2 && xv.dim(0) == idx.size(), "pick", "expects x[N,C] and N indices");
  const auto C = xv.dim(1);
  Tensor y({idx.size()});
  for (std::size_t n = 0; n < idx.size(); ++n) {
    require(idx[n] < C, "pick", "index outside row");
    y.data[n] = xv.data[n * C + idx[n]];
  }
  const auto ix = x.id();
  std::vector<std::size_t> iv(idx.begin(), idx.end());
  return x.tape()->record(std::move(y), {x}, [ix, C, iv = std::move(iv)](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t n = 0; n < iv.size(); ++n) gx.data[n * C + iv[n]] += g.data[n];
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const auto& xv = x.value();
  require(xv.rank() == 2, "gather_rows", "expects x[N,C]");
  const auto N = xv.dim(0), C = xv.dim(1);
  Tensor y({rows.size(), C});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] < N, "gather_rows", "row index outside tensor");
    std::copy_n(&xv.data[rows[r] * C], C, &y.data[r * C]);
  }
  const auto ix = x.id();
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  return x.tape()->record(std::move(y), {x}, [ix, C, rv = std::move(rv)](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (std::size_t r = 0; r < rv.size(); ++r)
      for (std::size_t c = 0; c < C; ++c) gx.data[rv[r] * C + c] += g.data[r * C + c];
  });
}

// ---- checkpoints -------------------------------------------------------------

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const ParamStore& params) {
  nlohmann::json manifest;
  manifest["format"] = "silo-params-v1";
  manifest["dtype"] = "float32-le";
  manifest["tensors"] = nlohmann::json::array();
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw Error("cannot write " + with_suffix(stem, ".bin").string());
  std::size_t offset = 0;
  for (const auto& name : params.names()) {
    const auto& t = params.value(name);
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.numel()}});
    for (double v : t.data) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += t.numel();
  }
  std::ofstream js(with_suffix(stem, ".json"));
  if (!js) throw Error("cannot write " + with_suffix(stem, ".json").string());
  js << manifest.dump(2) << '\n';
}

ParamStore load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream js(with_suffix(stem, ".json"));
  if (!js) throw ParseError("cannot open " + with_suffix(stem, ".json").string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "silo-params-v1") throw ParseError("unknown checkpoint format");
  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw ParseError("cannot open " + with_suffix(stem, ".bin").string());
  std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  ParamStore store;
  for (const auto& entry : manifest.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (count != shape_count(shape) || (offset + count) * 4 > raw.size())
      throw ParseError("checkpoint tensor " + entry.at("name").get<std::string>() + " out of range");
    Tensor t(shape);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &raw[(offset + i) * 4], 4);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      t.data[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    store.add(entry.at("name").get<std::string>(), std::move(t));
  }
  return store;
}

}  // namespace silo::nn
