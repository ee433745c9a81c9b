#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "tcra/errors.hpp"
#include "tcra/numerics/tape.hpp"

namespace tcra {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Denominator floor for the relative error, so entries whose true
  // gradient is ~0 are judged on absolute error instead.
  double abs_floor = 1e-6;
};

/// Compares tape gradients of a scalar function against central differences
/// (f(θ+h) - f(θ-h)) / 2h, entry by entry, over every listed parameter.
/// `f` must rebuild its graph on the tape it is given.
template <typename Real>
GradCheckReport grad_check(const std::function<Var<Real>(Tape<Real>&)>& f,
                           std::span<Parameter<Real>* const> params,
                           const GradCheckOptions& opts = {}) {
  auto evaluate = [&]() -> double {
    Tape<Real> tape;
    const double v = static_cast<double>(f(tape).value()[0]);
    if (!std::isfinite(v)) throw NumericalError("grad_check: function value is not finite");
    return v;
  };

  std::vector<Tensor<Real>> analytic;
  {
    Tape<Real> tape;
    auto loss = f(tape);
    if (!std::isfinite(static_cast<double>(loss.value()[0]))) {
      throw NumericalError("grad_check: function value is not finite");
    }
    tape.backward(loss);
    for (auto* p : params) analytic.push_back(tape.param_grad(*p));
  }

  GradCheckReport report;
  const Real h = static_cast<Real>(opts.step);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const Real saved = p.value[k];
      p.value[k] = saved + h;
      const double up = evaluate();
      p.value[k] = saved - h;
      const double down = evaluate();
      p.value[k] = saved;

      const double numeric = (up - down) / (2.0 * static_cast<double>(h));
      const double a = static_cast<double>(analytic[pi][k]);
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
      const double rel = abs_err / denom;
      ++report.entries_checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name;
        report.worst_index = k;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= opts.tol;
  return report;
}

}  // namespace tcra
