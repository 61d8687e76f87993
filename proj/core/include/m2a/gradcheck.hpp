#pragma once

#include <functional>

#include "m2a/ops.hpp"

namespace m2a {

/// Central-difference verification of reverse-mode gradients, 64-bit only.
/// `f` must be re-invokable on the same input handles and return a scalar.
/// Returns the worst relative error over every coordinate of every input,
/// with denominator max(|analytic|, |numeric|, 1e-8). Any NaN along the way
/// is reported as NaN so callers treat it as a failure.
inline double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                         std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = f(inputs);
  if (loss.numel() != 1) fail("grad_check: function must be scalar-valued");
  loss.backward();

  double worst = 0.0;
  for (auto& t : inputs) {
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      const double keep = t.data()[i];
      double fp, fm;
      {
        NoGradGuard ng;
        t.data()[i] = keep + h;
        fp = f(inputs).item();
        t.data()[i] = keep - h;
        fm = f(inputs).item();
        t.data()[i] = keep;
      }
      const double analytic = t.grad()[i];
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      if (std::isnan(err)) return std::numeric_limits<double>::quiet_NaN();
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace m2a
