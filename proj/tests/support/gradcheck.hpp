#pragma once

#include <cmath>
#include <functional>

#include "ncdiff/tensor.hpp"

namespace ncdiff::testing {

/// Central finite difference of a scalar function with respect to every
/// element of `x`, compared against `analytic`. Returns the worst relative
/// error max(|fd - an|) / max(|fd|, |an|, floor).
inline double max_grad_error(Tensor& x, const std::function<double()>& loss_fn, const Tensor& analytic,
                             double step = 1e-5, double floor = 1e-6) {
  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double lp = loss_fn();
    x[i] = orig - step;
    const double lm = loss_fn();
    x[i] = orig;
    const double fd = (lp - lm) / (2.0 * step);
    const double an = analytic[i];
    const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace ncdiff::testing
