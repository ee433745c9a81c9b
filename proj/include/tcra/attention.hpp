#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tcra/errors.hpp"
#include "tcra/numerics/tape.hpp"

namespace tcra {

/// One frame of a K-channel D x D convolutional map, stored as D² rows of
/// K-vectors (row i is location i in row-major grid order).
template <typename Real>
struct FeatureMap {
  std::size_t channels = 0;  // K
  std::size_t side = 0;      // D
  Tensor<Real> values;       // [D², K]

  FeatureMap() = default;
  FeatureMap(std::size_t k, std::size_t d, Tensor<Real> v) : channels(k), side(d), values(std::move(v)) {
    if (values.shape() != Shape{d * d, k}) {
      throw DimensionError("feature map of K=" + std::to_string(k) + ", D=" + std::to_string(d) +
                           " needs shape [" + std::to_string(d * d) + "x" + std::to_string(k) +
                           "], got " + shape_str(values.shape()));
    }
  }

  std::size_t locations() const { return side * side; }
};

/// Scoring weights: location-specific rows on the own previous hidden state,
/// location-specific rows on the partner's previous hidden state, and one
/// K-vector shared by all locations that scores each location's own
/// feature vector. No bias.
template <typename Real>
struct AttentionParams {
  std::size_t locations = 0;
  std::size_t hidden = 0;
  std::size_t channels = 0;
  Parameter<Real> W_h;          // [D², hidden]
  Parameter<Real> W_h_partner;  // [D², hidden]
  Parameter<Real> w_X;          // [K]

  static AttentionParams zeros(const std::string& prefix, std::size_t locations, std::size_t hidden,
                               std::size_t channels) {
    AttentionParams a;
    a.locations = locations;
    a.hidden = hidden;
    a.channels = channels;
    a.W_h = Parameter<Real>(prefix + "W_h", Tensor<Real>({locations, hidden}));
    a.W_h_partner = Parameter<Real>(prefix + "W_h_partner", Tensor<Real>({locations, hidden}));
    a.w_X = Parameter<Real>(prefix + "w_X", Tensor<Real>({channels}));
    return a;
  }

  std::vector<Parameter<Real>*> parameters() { return {&W_h, &W_h_partner, &w_X}; }
};

template <typename Real>
struct AttentionVars {
  Var<Real> weights;  // L_t, [D²]
  Var<Real> input;    // x_t = Σ l_i X_i, [K]
};

/// Soft attention over map locations:
///   logit_i = W_h[i]·h_own (+ W_h_partner[i]·h_partner) + w_X·X_i
///   L = softmax(logits), x = Σ_i L_i X_i
/// `h_partner` present selects the relative (two-subject) variant.
template <typename Real>
AttentionVars<Real> attend(Tape<Real>& t, const AttentionParams<Real>& p, Var<Real> map, Var<Real> h_own,
                           std::optional<Var<Real>> h_partner = std::nullopt) {
  const auto& m = map.value();
  if (m.rank() != 2 || m.dim(0) != p.locations || m.dim(1) != p.channels) {
    throw DimensionError("attend: map " + shape_str(m.shape()) + " does not match [" +
                         std::to_string(p.locations) + "x" + std::to_string(p.channels) + "]");
  }
  if (h_own.value().rank() != 1 || h_own.value().dim(0) != p.hidden ||
      (h_partner && (h_partner->value().rank() != 1 || h_partner->value().dim(0) != p.hidden))) {
    throw DimensionError("attend: hidden state size does not match [" + std::to_string(p.hidden) + "]");
  }
  auto logits = matvec(t.param(p.W_h), h_own);
  if (h_partner) logits = add(logits, matvec(t.param(p.W_h_partner), *h_partner));
  logits = add(logits, matvec(map, t.param(p.w_X)));
  auto weights = softmax(logits);
  return {weights, weighted_sum(map, weights)};
}

template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> attend(const AttentionParams<Real>& p, const FeatureMap<Real>& map,
                                             const Tensor<Real>& h_own,
                                             const std::optional<Tensor<Real>>& h_partner = std::nullopt) {
  Tape<Real> t;
  std::optional<Var<Real>> partner;
  if (h_partner) partner = t.constant(*h_partner);
  auto r = attend(t, p, t.constant(map.values), t.constant(h_own), partner);
  return {r.weights.value(), r.input.value()};
}

}  // namespace tcra
