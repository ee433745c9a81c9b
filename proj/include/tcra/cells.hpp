#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tcra/errors.hpp"
#include "tcra/numerics/tape.hpp"

namespace tcra {

/// Peephole weights V_* as full [hidden x hidden] matrices or as diagonals
/// stored as [hidden] vectors.
enum class Peephole { full, diagonal };

inline const char* to_string(Peephole p) { return p == Peephole::full ? "full" : "diagonal"; }

inline Peephole peephole_from_string(const std::string& s) {
  if (s == "full") return Peephole::full;
  if (s == "diagonal") return Peephole::diagonal;
  throw ConfigError("unknown peephole mode '" + s + "'");
}

/// Gate weights of one LSTM. The candidate path has no peephole and the
/// output gate peeks at the *current* cell, matching
///   i = σ(W_i x + U_i h' + V_i c' + b_i)
///   f = σ(W_f x + U_f h' + V_f c' + b_f)
///   c = f·c' + i·tanh(W_c x + U_c h' + b_c)
///   o = σ(W_o x + U_o h' + V_o c + b_o)
///   h = o·tanh(c)
template <typename Real>
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  Peephole peephole = Peephole::full;

  Parameter<Real> W_i, W_f, W_c, W_o;
  Parameter<Real> U_i, U_f, U_c, U_o;
  Parameter<Real> V_i, V_f, V_o;
  Parameter<Real> b_i, b_f, b_c, b_o;

  static LstmParams zeros(const std::string& prefix, std::size_t input_dim, std::size_t hidden,
                          Peephole peephole = Peephole::full) {
    if (input_dim == 0 || hidden == 0) throw DimensionError("LSTM dims must be positive");
    LstmParams p;
    p.input_dim = input_dim;
    p.hidden = hidden;
    p.peephole = peephole;
    const Shape w{hidden, input_dim}, u{hidden, hidden}, b{hidden};
    const Shape v = peephole == Peephole::full ? u : b;
    auto make = [&](const char* n, const Shape& s) { return Parameter<Real>(prefix + n, Tensor<Real>(s)); };
    p.W_i = make("W_i", w), p.W_f = make("W_f", w), p.W_c = make("W_c", w), p.W_o = make("W_o", w);
    p.U_i = make("U_i", u), p.U_f = make("U_f", u), p.U_c = make("U_c", u), p.U_o = make("U_o", u);
    p.V_i = make("V_i", v), p.V_f = make("V_f", v), p.V_o = make("V_o", v);
    p.b_i = make("b_i", b), p.b_f = make("b_f", b), p.b_c = make("b_c", b), p.b_o = make("b_o", b);
    return p;
  }

  std::vector<Parameter<Real>*> parameters() {
    return {&W_i, &W_f, &W_c, &W_o, &U_i, &U_f, &U_c, &U_o,
            &V_i, &V_f, &V_o, &b_i, &b_f, &b_c, &b_o};
  }
};

/// Extra recurrent weights reading another stream's hidden state, one per
/// gate pre-activation (i, f, c, o).
template <typename Real>
struct RecurrentBlock {
  std::size_t source_hidden = 0;
  Parameter<Real> U_i, U_f, U_c, U_o;

  static RecurrentBlock zeros(const std::string& prefix, std::size_t hidden, std::size_t source_hidden) {
    RecurrentBlock r;
    r.source_hidden = source_hidden;
    const Shape s{hidden, source_hidden};
    r.U_i = Parameter<Real>(prefix + "U_i", Tensor<Real>(s));
    r.U_f = Parameter<Real>(prefix + "U_f", Tensor<Real>(s));
    r.U_c = Parameter<Real>(prefix + "U_c", Tensor<Real>(s));
    r.U_o = Parameter<Real>(prefix + "U_o", Tensor<Real>(s));
    return r;
  }

  std::vector<Parameter<Real>*> parameters() { return {&U_i, &U_f, &U_c, &U_o}; }
};

/// One subject stream of the coupled network: its own LSTM weights (the own
/// recurrent matrices act as U_{*,s1}), the partner weights U_{*,s2}, and
/// optionally the global-stream weights U_{*,g}.
template <typename Real>
struct CoupledParams {
  LstmParams<Real> own;
  RecurrentBlock<Real> partner;
  std::optional<RecurrentBlock<Real>> global;

  static CoupledParams zeros(const std::string& prefix, std::size_t input_dim, std::size_t hidden,
                             std::optional<std::size_t> global_hidden = std::nullopt,
                             Peephole peephole = Peephole::full) {
    CoupledParams c;
    c.own = LstmParams<Real>::zeros(prefix, input_dim, hidden, peephole);
    c.partner = RecurrentBlock<Real>::zeros(prefix + "partner.", hidden, hidden);
    if (global_hidden) c.global = RecurrentBlock<Real>::zeros(prefix + "global.", hidden, *global_hidden);
    return c;
  }

  std::vector<Parameter<Real>*> parameters() {
    auto ps = own.parameters();
    for (auto* p : partner.parameters()) ps.push_back(p);
    if (global)
      for (auto* p : global->parameters()) ps.push_back(p);
    return ps;
  }
};

template <typename Real>
struct LstmState {
  Tensor<Real> h;
  Tensor<Real> c;

  static LstmState zeros(std::size_t hidden) { return {Tensor<Real>({hidden}), Tensor<Real>({hidden})}; }
};

/// An LstmState living on a tape.
template <typename Real>
struct StateVars {
  Var<Real> h;
  Var<Real> c;

  static StateVars zeros(Tape<Real>& tape, std::size_t hidden) {
    return {tape.constant(Tensor<Real>({hidden})), tape.constant(Tensor<Real>({hidden}))};
  }
  static StateVars from(Tape<Real>& tape, const LstmState<Real>& s) {
    return {tape.constant(s.h), tape.constant(s.c)};
  }
  LstmState<Real> state() const { return {h.value(), c.value()}; }
};

namespace detail {

template <typename Real>
void check_vec(const char* what, Var<Real> v, std::size_t n) {
  if (v.value().rank() != 1 || v.value().dim(0) != n) {
    throw DimensionError(std::string(what) + ": expected [" + std::to_string(n) + "], got " +
                         shape_str(v.shape()));
  }
}

template <typename Real>
Var<Real> peep(Tape<Real>& t, const LstmParams<Real>& p, const Parameter<Real>& V, Var<Real> c) {
  return p.peephole == Peephole::full ? matvec(t.param(V), c) : mul(t.param(V), c);
}

/// Additional recurrent contributions, one per gate (i, f, c, o).
template <typename Real>
using ExtraTerms = std::array<std::optional<Var<Real>>, 4>;

template <typename Real>
ExtraTerms<Real> block_terms(Tape<Real>& t, const RecurrentBlock<Real>& r, Var<Real> source) {
  return {matvec(t.param(r.U_i), source), matvec(t.param(r.U_f), source),
          matvec(t.param(r.U_c), source), matvec(t.param(r.U_o), source)};
}

template <typename Real>
ExtraTerms<Real> combine(const ExtraTerms<Real>& a, const ExtraTerms<Real>& b) {
  ExtraTerms<Real> out;
  for (std::size_t g = 0; g < 4; ++g) {
    if (a[g] && b[g]) out[g] = add(*a[g], *b[g]);
    else out[g] = a[g] ? a[g] : b[g];
  }
  return out;
}

template <typename Real>
StateVars<Real> gated_update(Tape<Real>& t, const LstmParams<Real>& p, Var<Real> x,
                             const StateVars<Real>& prev, const ExtraTerms<Real>& extra) {
  check_vec("lstm input", x, p.input_dim);
  check_vec("lstm h", prev.h, p.hidden);
  check_vec("lstm c", prev.c, p.hidden);

  // W x + U h' (+ extra recurrent terms)
  auto recurrent = [&](const Parameter<Real>& W, const Parameter<Real>& U, std::size_t g) {
    auto pre = add(matvec(t.param(W), x), matvec(t.param(U), prev.h));
    if (extra[g]) pre = add(pre, *extra[g]);
    return pre;
  };

  auto i = sigmoid(add(add(recurrent(p.W_i, p.U_i, 0), peep(t, p, p.V_i, prev.c)), t.param(p.b_i)));
  auto f = sigmoid(add(add(recurrent(p.W_f, p.U_f, 1), peep(t, p, p.V_f, prev.c)), t.param(p.b_f)));
  auto cand = tanh(add(recurrent(p.W_c, p.U_c, 2), t.param(p.b_c)));
  auto c = add(mul(f, prev.c), mul(i, cand));
  auto o = sigmoid(add(add(recurrent(p.W_o, p.U_o, 3), peep(t, p, p.V_o, c)), t.param(p.b_o)));
  auto h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace detail

/// Vanilla peephole LSTM step.
template <typename Real>
StateVars<Real> lstm_step(Tape<Real>& t, const LstmParams<Real>& p, Var<Real> x,
                          const StateVars<Real>& prev) {
  return detail::gated_update(t, p, x, prev, {});
}

/// Both subject streams advanced simultaneously from the same previous
/// states; each stream's recurrent term is U_s1 h_own + U_s2 h_partner.
template <typename Real>
std::pair<StateVars<Real>, StateVars<Real>> coupled_step(
    Tape<Real>& t, const CoupledParams<Real>& p1, const CoupledParams<Real>& p2, Var<Real> x1,
    Var<Real> x2, const StateVars<Real>& prev1, const StateVars<Real>& prev2) {
  if (p1.own.hidden != p2.own.hidden || p1.partner.source_hidden != p2.own.hidden ||
      p2.partner.source_hidden != p1.own.hidden) {
    throw DimensionError("coupled_step: hidden sizes of the two streams differ");
  }
  auto s1 = detail::gated_update(t, p1.own, x1, prev1, detail::block_terms(t, p1.partner, prev2.h));
  auto s2 = detail::gated_update(t, p2.own, x2, prev2, detail::block_terms(t, p2.partner, prev1.h));
  return {s1, s2};
}

/// Coupled step plus U_g h_g in every gate, where `h_global` is the global
/// stream's hidden state at the current step (step the global LSTM first).
template <typename Real>
std::pair<StateVars<Real>, StateVars<Real>> tricoupled_step(
    Tape<Real>& t, const CoupledParams<Real>& p1, const CoupledParams<Real>& p2, Var<Real> x1,
    Var<Real> x2, const StateVars<Real>& prev1, const StateVars<Real>& prev2, Var<Real> h_global) {
  if (p1.own.hidden != p2.own.hidden || p1.partner.source_hidden != p2.own.hidden ||
      p2.partner.source_hidden != p1.own.hidden) {
    throw DimensionError("tricoupled_step: hidden sizes of the two streams differ");
  }
  if (!p1.global || !p2.global) throw ConfigError("tricoupled_step: missing global coupling weights");
  detail::check_vec("global hidden", h_global, p1.global->source_hidden);
  detail::check_vec("global hidden", h_global, p2.global->source_hidden);
  auto e1 = detail::combine(detail::block_terms(t, p1.partner, prev2.h),
                            detail::block_terms(t, *p1.global, h_global));
  auto e2 = detail::combine(detail::block_terms(t, p2.partner, prev1.h),
                            detail::block_terms(t, *p2.global, h_global));
  auto s1 = detail::gated_update(t, p1.own, x1, prev1, e1);
  auto s2 = detail::gated_update(t, p2.own, x2, prev2, e2);
  return {s1, s2};
}

// Value-level conveniences; each runs on a throwaway tape.

template <typename Real>
LstmState<Real> lstm_step(const LstmParams<Real>& p, const Tensor<Real>& x, const LstmState<Real>& prev) {
  Tape<Real> t;
  return lstm_step(t, p, t.constant(x), StateVars<Real>::from(t, prev)).state();
}

template <typename Real>
std::pair<LstmState<Real>, LstmState<Real>> coupled_step(
    const CoupledParams<Real>& p1, const CoupledParams<Real>& p2, const Tensor<Real>& x1,
    const Tensor<Real>& x2, const LstmState<Real>& prev1, const LstmState<Real>& prev2) {
  Tape<Real> t;
  auto [a, b] = coupled_step(t, p1, p2, t.constant(x1), t.constant(x2), StateVars<Real>::from(t, prev1),
                             StateVars<Real>::from(t, prev2));
  return {a.state(), b.state()};
}

template <typename Real>
std::pair<LstmState<Real>, LstmState<Real>> tricoupled_step(
    const CoupledParams<Real>& p1, const CoupledParams<Real>& p2, const Tensor<Real>& x1,
    const Tensor<Real>& x2, const LstmState<Real>& prev1, const LstmState<Real>& prev2,
    const Tensor<Real>& h_global) {
  Tape<Real> t;
  auto [a, b] = tricoupled_step(t, p1, p2, t.constant(x1), t.constant(x2), StateVars<Real>::from(t, prev1),
                                StateVars<Real>::from(t, prev2), t.constant(h_global));
  return {a.state(), b.state()};
}

}  // namespace tcra
