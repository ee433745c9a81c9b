#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tcra/errors.hpp"
#include "tcra/numerics/tensor.hpp"

namespace tcra {

/// A named trainable tensor plus its accumulated gradient.
template <typename Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<Real> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor<Real>(value.shape()); }
};

template <typename Real>
class Tape;

/// Handle to a node recorded on a Tape. References returned by value() are
/// invalidated when more ops are recorded; copy if you need them longer.
template <typename Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<Real>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

/// Linear record of executed ops. Backward replays the record in reverse.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> constant(Tensor<Real> value) {
    return push(std::move(value), false, nullptr);
  }

  /// Leaf bound to `p`. Binding the same parameter twice yields the same node.
  Var<Real> param(const Parameter<Real>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
      return {this, it->second};
    }
    auto v = push(p.value, true, nullptr);
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  Var<Real> record(Tensor<Real> value, bool requires_grad, BackwardFn backward) {
    return push(std::move(value), requires_grad, std::move(backward));
  }

  const Tensor<Real>& value(Var<Real> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<Real> v) const { return nodes_.at(v.id).requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor<Real>& value(std::size_t id) const { return nodes_[id].value; }

  /// Gradient buffer of node `id`, allocated on first touch.
  Tensor<Real>& grad_ref(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<Real>(n.value.shape());
    return n.grad;
  }

  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Reverse pass from a single-element node. Returns the number of
  /// recorded ops whose backward rule ran.
  std::size_t backward(Var<Real> loss) {
    if (value(loss).size() != 1) {
      throw DimensionError("backward needs a scalar loss, got " +
                           shape_str(value(loss).shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor<Real>();
    grad_ref(loss.id)[0] = Real{1};
    std::size_t visited = 0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || !n.requires_grad || n.grad.empty()) continue;
      n.backward(*this, i);
      ++visited;
    }
    return visited;
  }

  /// Gradient reached by `p` in the last backward pass (zeros if unused).
  Tensor<Real> param_grad(const Parameter<Real>& p) const {
    auto it = param_nodes_.find(&p);
    if (it == param_nodes_.end() || nodes_[it->second].grad.empty()) {
      return Tensor<Real>(p.value.shape());
    }
    return nodes_[it->second].grad;
  }

  /// Adds the leaf gradients of the last backward pass into Parameter::grad.
  void accumulate_into(std::span<Parameter<Real>* const> params) const {
    for (auto* p : params) {
      auto it = param_nodes_.find(p);
      if (it == param_nodes_.end()) continue;
      const auto& g = nodes_[it->second].grad;
      if (g.empty()) continue;
      for (std::size_t k = 0; k < g.size(); ++k) p->grad[k] += g[k];
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var<Real> push(Tensor<Real> value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Tensor<Real>(), std::move(backward),
                          requires_grad});
    return {this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Real>*, std::size_t> param_nodes_;
};

namespace detail {

template <typename Real>
void require_same_shape(const char* op, Var<Real> a, Var<Real> b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

template <typename Real>
Real stable_sigmoid(Real x) {
  // Clamp keeps exp() finite in either precision.
  x = std::clamp(x, Real(-80), Real(80));
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace detail

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  detail::require_same_shape("add", a, b);
  auto& t = *a.tape;
  Tensor<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [ia = a.id, ib = b.id](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    for (auto id : {ia, ib}) {
      if (!tp.requires_grad(id)) continue;
      auto& dst = tp.grad_ref(id);
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
    }
  });
}

/// Elementwise product.
template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  detail::require_same_shape("mul", a, b);
  auto& t = *a.tape;
  Tensor<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [ia = a.id, ib = b.id](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    if (tp.requires_grad(ia)) {
      auto& dst = tp.grad_ref(ia);
      const auto& other = tp.value(ib);
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k] * other[k];
    }
    if (tp.requires_grad(ib)) {
      auto& dst = tp.grad_ref(ib);
      const auto& other = tp.value(ia);
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k] * other[k];
    }
  });
}

template <typename Real>
Var<Real> operator+(Var<Real> a, Var<Real> b) { return add(a, b); }

template <typename Real>
Var<Real> operator*(Var<Real> a, Var<Real> b) { return mul(a, b); }

template <typename Real>
Var<Real> scale(Var<Real> a, Real s) {
  auto& t = *a.tape;
  Tensor<Real> out = a.value();
  for (auto& v : out.values()) v *= s;
  return t.record(std::move(out), t.requires_grad(a), [ia = a.id, s](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    auto& dst = tp.grad_ref(ia);
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += s * g[k];
  });
}

/// [m x k] * [k x n] -> [m x n]
template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(av.shape()) + " by " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<Real> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = av.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * bv.at(p, j);
    }
  auto& t = *a.tape;
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [ia = a.id, ib = b.id, m, k, n](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    const auto& A = tp.value(ia);
    const auto& B = tp.value(ib);
    if (tp.requires_grad(ia)) {  // dA = dC * B^T
      auto& dA = tp.grad_ref(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          Real acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g.at(i, j) * B.at(p, j);
          dA.at(i, p) += acc;
        }
    }
    if (tp.requires_grad(ib)) {  // dB = A^T * dC
      auto& dB = tp.grad_ref(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const Real aip = A.at(i, p);
          for (std::size_t j = 0; j < n; ++j) dB.at(p, j) += aip * g.at(i, j);
        }
    }
  });
}

/// [m x k] * [k] -> [m]
template <typename Real>
Var<Real> matvec(Var<Real> a, Var<Real> x) {
  const auto& av = a.value();
  const auto& xv = x.value();
  if (av.rank() != 2 || xv.rank() != 1 || av.dim(1) != xv.dim(0)) {
    throw DimensionError("matvec: cannot multiply " + shape_str(av.shape()) + " by " +
                         shape_str(xv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1);
  Tensor<Real> out({m});
  for (std::size_t i = 0; i < m; ++i) {
    Real acc = 0;
    const Real* row = av.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) acc += row[p] * xv[p];
    out[i] = acc;
  }
  auto& t = *a.tape;
  const bool rg = t.requires_grad(a) || t.requires_grad(x);
  return t.record(std::move(out), rg, [ia = a.id, ix = x.id, m, k](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    if (tp.requires_grad(ia)) {
      auto& dA = tp.grad_ref(ia);
      const auto& X = tp.value(ix);
      for (std::size_t i = 0; i < m; ++i) {
        Real* row = dA.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) row[p] += g[i] * X[p];
      }
    }
    if (tp.requires_grad(ix)) {
      auto& dx = tp.grad_ref(ix);
      const auto& A = tp.value(ia);
      for (std::size_t i = 0; i < m; ++i) {
        const Real* row = A.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) dx[p] += row[p] * g[i];
      }
    }
  });
}

/// Weighted sum of the rows of `rows` [n x k] with weights [n] -> [k].
template <typename Real>
Var<Real> weighted_sum(Var<Real> rows, Var<Real> weights) {
  const auto& R = rows.value();
  const auto& w = weights.value();
  if (R.rank() != 2 || w.rank() != 1 || R.dim(0) != w.dim(0)) {
    throw DimensionError("weighted_sum: rows " + shape_str(R.shape()) + " vs weights " +
                         shape_str(w.shape()));
  }
  const std::size_t n = R.dim(0), k = R.dim(1);
  Tensor<Real> out({k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += w[i] * R.at(i, j);
  auto& t = *rows.tape;
  const bool rg = t.requires_grad(rows) || t.requires_grad(weights);
  return t.record(std::move(out), rg, [ir = rows.id, iw = weights.id, n, k](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    if (tp.requires_grad(iw)) {
      auto& dw = tp.grad_ref(iw);
      const auto& Rv = tp.value(ir);
      for (std::size_t i = 0; i < n; ++i) {
        Real acc = 0;
        for (std::size_t j = 0; j < k; ++j) acc += Rv.at(i, j) * g[j];
        dw[i] += acc;
      }
    }
    if (tp.requires_grad(ir)) {
      auto& dR = tp.grad_ref(ir);
      const auto& wv = tp.value(iw);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) dR.at(i, j) += wv[i] * g[j];
    }
  });
}

template <typename Real>
Var<Real> sigmoid(Var<Real> a) {
  auto& t = *a.tape;
  Tensor<Real> out = a.value();
  for (auto& v : out.values()) v = detail::stable_sigmoid(v);
  return t.record(std::move(out), t.requires_grad(a), [ia = a.id](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    const auto& y = tp.value(self);
    auto& dst = tp.grad_ref(ia);
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k] * y[k] * (Real(1) - y[k]);
  });
}

template <typename Real>
Var<Real> tanh(Var<Real> a) {
  auto& t = *a.tape;
  Tensor<Real> out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return t.record(std::move(out), t.requires_grad(a), [ia = a.id](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    const auto& y = tp.value(self);
    auto& dst = tp.grad_ref(ia);
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k] * (Real(1) - y[k] * y[k]);
  });
}

template <typename Real>
Tensor<Real> softmax_values(const Tensor<Real>& logits) {
  Tensor<Real> out = logits;
  const Real mx = *std::max_element(out.values().begin(), out.values().end());
  Real total = 0;
  for (auto& v : out.values()) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : out.values()) v /= total;
  return out;
}

template <typename Real>
Var<Real> softmax(Var<Real> logits) {
  if (logits.value().rank() != 1) {
    throw DimensionError("softmax expects a vector, got " + shape_str(logits.shape()));
  }
  auto& t = *logits.tape;
  return t.record(softmax_values(logits.value()), t.requires_grad(logits),
                  [ia = logits.id](Tape<Real>& tp, std::size_t self) {
                    const auto& g = tp.grad_ref(self);
                    const auto& y = tp.value(self);
                    Real dot = 0;
                    for (std::size_t k = 0; k < g.size(); ++k) dot += g[k] * y[k];
                    auto& dst = tp.grad_ref(ia);
                    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += y[k] * (g[k] - dot);
                  });
}

/// Concatenation along the last axis; leading axes must agree.
template <typename Real>
Var<Real> concat(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  auto& t = *parts.front().tape;
  const Shape& first = parts.front().shape();
  const Shape lead(first.begin(), first.end() - 1);
  const std::size_t outer = shape_numel(lead);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool rg = false;
  for (auto p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw DimensionError("concat: incompatible shapes " + shape_str(first) + " and " +
                           shape_str(s));
    }
    widths.push_back(s.back());
    total += s.back();
    rg = rg || t.requires_grad(p);
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor<Real> out(out_shape);
  std::size_t off = 0;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const auto& v = parts[j].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data() + o * widths[j], widths[j], out.data() + o * total + off);
    off += widths[j];
  }
  std::vector<std::size_t> ids;
  for (auto p : parts) ids.push_back(p.id);
  return t.record(std::move(out), rg, [ids, widths, outer, total](Tape<Real>& tp, std::size_t self) {
    const auto& g = tp.grad_ref(self);
    std::size_t off = 0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (tp.requires_grad(ids[j])) {
        auto& dst = tp.grad_ref(ids[j]);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t c = 0; c < widths[j]; ++c)
            dst[o * widths[j] + c] += g[o * total + off + c];
      }
      off += widths[j];
    }
  });
}

/// Sum of all entries, shape [1].
template <typename Real>
Var<Real> sum(Var<Real> a) {
  auto& t = *a.tape;
  Real acc = 0;
  for (auto v : a.value().values()) acc += v;
  return t.record(Tensor<Real>({1}, {acc}), t.requires_grad(a), [ia = a.id](Tape<Real>& tp, std::size_t self) {
    const Real g = tp.grad_ref(self)[0];
    auto& dst = tp.grad_ref(ia);
    for (auto& v : dst.values()) v += g;
  });
}

/// Arithmetic mean of equally shaped tensors.
template <typename Real>
Var<Real> mean(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw DimensionError("mean of nothing");
  Var<Real> acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return parts.size() == 1 ? acc : scale(acc, Real(1) / static_cast<Real>(parts.size()));
}

/// Multiplies by a precomputed mask (already carrying the 1/(1-p) scale).
template <typename Real>
Var<Real> apply_dropout(Var<Real> a, const Tensor<Real>& mask) {
  return mul(a, a.tape->constant(mask));
}

/// -log(probs[label] + eps), shape [1].
template <typename Real>
Var<Real> nll(Var<Real> probs, std::size_t label, Real eps = Real(1e-12)) {
  const auto& p = probs.value();
  if (p.rank() != 1) throw DimensionError("nll expects a probability vector");
  if (label >= p.size()) {
    throw DataError("label " + std::to_string(label) + " out of range for " +
                    std::to_string(p.size()) + " classes");
  }
  auto& t = *probs.tape;
  const Real loss = -std::log(p[label] + eps);
  return t.record(Tensor<Real>({1}, {loss}), t.requires_grad(probs),
                  [ip = probs.id, label, eps](Tape<Real>& tp, std::size_t self) {
                    const Real g = tp.grad_ref(self)[0];
                    const Real pk = tp.value(ip)[label];
                    tp.grad_ref(ip)[label] += -g / (pk + eps);
                  });
}

}  // namespace tcra
