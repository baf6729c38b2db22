#pragma once

#include "ncdiff/image.hpp"
#include "ncdiff/perceptual.hpp"
#include "ncdiff/tensor.hpp"
#include "ncdiff/wavelet.hpp"

namespace ncdiff {

struct LossConfig {
  double omega = 0.5;         // perceptual weight inside the diffusion loss
  double beta = 0.3;          // high-frequency term weight
  int64_t wavelet_levels = 4;
};

/// Per-component values of one training loss evaluation.
/// total = eps_mse + omega * perceptual + beta * high_freq.
struct LossBreakdown {
  double eps_mse = 0.0;
  double perceptual = 0.0;
  double high_freq = 0.0;
  double diffusion = 0.0;  // eps_mse + omega * perceptual
  double total = 0.0;
};

/// Noise-prediction MSE plus the weighted perceptual distance between the
/// clean image and its one-step estimate. omega = 0 reduces to pure MSE.
double diffusion_loss(const Tensor& eps_hat, const Tensor& eps_n, const Image& i0, const Image& i0_theta,
                      double omega, PerceptualMetric& metric);

/// Full training loss. Throws if any component is non-finite, naming the
/// offending component.
LossBreakdown total_loss(const Tensor& eps_hat, const Tensor& eps_n, const Image& i0, const Image& i0_theta,
                         const LossConfig& cfg, PerceptualMetric& metric);

/// Same value; additionally accumulates d(total)/d(eps_hat) into geps_hat
/// and d(total)/d(i0_theta.data) into gi0_theta (either may be null). The
/// chain from i0_theta back to eps_hat through the sampling identity is the
/// caller's, so both partials are reported separately.
LossBreakdown total_loss_backward(const Tensor& eps_hat, const Tensor& eps_n, const Image& i0,
                                  const Image& i0_theta, const LossConfig& cfg, PerceptualMetric& metric,
                                  Tensor* geps_hat, Tensor* gi0_theta);

}  // namespace ncdiff
