#include "ncdiff/losses.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ncdiff {
namespace {

void require_finite(double v, const char* component) {
  if (std::isfinite(v)) return;
  std::ostringstream os;
  os << "non-finite loss component: " << component << " = " << v;
  throw std::runtime_error(os.str());
}

// Mean squared error with optional gradient accumulation into ga.
double mse_backward(const Tensor& a, const Tensor& b, Tensor* ga, double scale) {
  require_same_shape(a, b, "noise prediction mse");
  const double inv_n = 1.0 / static_cast<double>(a.numel());
  double acc = 0.0;
  for (int64_t k = 0; k < a.numel(); ++k) {
    const double diff = a.data()[k] - b.data()[k];
    acc += diff * diff;
    if (ga != nullptr) ga->data()[k] += scale * 2.0 * diff * inv_n;
  }
  return acc * inv_n;
}

}  // namespace

double diffusion_loss(const Tensor& eps_hat, const Tensor& eps_n, const Image& i0, const Image& i0_theta,
                      double omega, PerceptualMetric& metric) {
  const double m = mse_backward(eps_hat, eps_n, nullptr, 0.0);
  require_finite(m, "noise prediction mse");
  if (omega == 0.0) return m;  // skip the metric entirely for the pure-MSE case
  const double p = metric.distance(i0, i0_theta);
  require_finite(p, "perceptual distance");
  return m + omega * p;
}

LossBreakdown total_loss(const Tensor& eps_hat, const Tensor& eps_n, const Image& i0, const Image& i0_theta,
                         const LossConfig& cfg, PerceptualMetric& metric) {
  return total_loss_backward(eps_hat, eps_n, i0, i0_theta, cfg, metric, nullptr, nullptr);
}

LossBreakdown total_loss_backward(const Tensor& eps_hat, const Tensor& eps_n, const Image& i0,
                                  const Image& i0_theta, const LossConfig& cfg, PerceptualMetric& metric,
                                  Tensor* geps_hat, Tensor* gi0_theta) {
  if (cfg.omega < 0.0 || cfg.beta < 0.0) throw std::invalid_argument("loss weights must be >= 0");
  LossBreakdown out;
  out.eps_mse = mse_backward(eps_hat, eps_n, geps_hat, 1.0);
  require_finite(out.eps_mse, "noise prediction mse");

  if (cfg.omega != 0.0) {
    out.perceptual = gi0_theta != nullptr ? metric.distance_backward(i0, i0_theta, *gi0_theta, cfg.omega)
                                          : metric.distance(i0, i0_theta);
    require_finite(out.perceptual, "perceptual distance");
  }
  out.diffusion = out.eps_mse + cfg.omega * out.perceptual;

  if (cfg.beta != 0.0) {
    out.high_freq = high_freq_loss_backward(i0_theta.data, i0.data, cfg.wavelet_levels, gi0_theta, nullptr, cfg.beta);
    require_finite(out.high_freq, "high frequency loss");
  }
  out.total = out.diffusion + cfg.beta * out.high_freq;
  require_finite(out.total, "total loss");
  return out;
}

}  // namespace ncdiff
