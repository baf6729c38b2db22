#include "ncdiff/aff.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "ncdiff/fft.hpp"

namespace ncdiff {
namespace {

// Normalized frequency radius of bin (u,v) in an h*w spectrum with DC at
// (0,0): signed offsets are taken to the nearest alias, so u' in
// [-h/2, h/2] and r = sqrt((2u'/h)^2 + (2v'/w)^2) reaches sqrt(2) at the
// Nyquist corner.
double bin_radius(int64_t u, int64_t v, int64_t h, int64_t w) {
  const int64_t us = (u <= h / 2) ? u : u - h;
  const int64_t vs = (v <= w / 2) ? v : v - w;
  const double ru = 2.0 * static_cast<double>(us) / static_cast<double>(h);
  const double rv = 2.0 * static_cast<double>(vs) / static_cast<double>(w);
  return std::sqrt(ru * ru + rv * rv);
}

// Applies the level filter to every channel of x. When hp_out is non-null it
// also receives the pure high-pass component IFFT(1_{r >= r_th} (*) FFT(x)),
// which is both d(out)/d(gamma) and the backward operator's building block.
Tensor filter_channels(const Tensor& x, double r_th, double gamma, Tensor* hp_out) {
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int64_t plane = h * w;
  Tensor y(x.shape());
  if (hp_out != nullptr) *hp_out = Tensor(x.shape());

  std::vector<bool> high(static_cast<size_t>(plane));
  bool any_high = false;
  for (int64_t u = 0; u < h; ++u) {
    for (int64_t v = 0; v < w; ++v) {
      const bool hi = !(bin_radius(u, v, h, w) < r_th);
      high[static_cast<size_t>(u * w + v)] = hi;
      any_high = any_high || hi;
    }
  }
  if (!any_high || gamma == 0.0) {
    // The mask is all ones (or multiplies by exactly 1): the filter is a
    // round trip. Short-circuiting keeps gamma = 0 bitwise-identity rather
    // than identity up to FFT noise.
    y = x;
    if (hp_out == nullptr) return y;
  }

  std::vector<std::complex<double>> spec(static_cast<size_t>(plane));
  std::vector<std::complex<double>> tmp(static_cast<size_t>(plane));
  const bool need_main = any_high && gamma != 0.0;
  for (int64_t ch = 0; ch < c; ++ch) {
    fft2(x.data() + ch * plane, spec.data(), h, w);
    if (hp_out != nullptr) {
      for (int64_t k = 0; k < plane; ++k) tmp[static_cast<size_t>(k)] = high[static_cast<size_t>(k)] ? spec[static_cast<size_t>(k)] : 0.0;
      ifft2_real(tmp.data(), hp_out->data() + ch * plane, h, w);
    }
    if (need_main) {
      // Low bins multiply by exactly 1.0 and stay bitwise unchanged.
      for (int64_t k = 0; k < plane; ++k) {
        if (high[static_cast<size_t>(k)]) spec[static_cast<size_t>(k)] *= 1.0 + gamma;
      }
      ifft2_real(spec.data(), y.data() + ch * plane, h, w);
    }
  }
  return y;
}

}  // namespace

Tensor build_radial_mask(int64_t h, int64_t w, double r_th, double gamma) {
  if (h < 1 || w < 1) throw std::invalid_argument("mask dims must be >= 1");
  Tensor m({h, w});
  for (int64_t u = 0; u < h; ++u) {
    for (int64_t v = 0; v < w; ++v) {
      m[u * w + v] = bin_radius(u, v, h, w) < r_th ? 1.0 : 1.0 + gamma;
    }
  }
  return m;
}

AFFLayer::AFFLayer(std::string name, double r_th, double gamma_init)
    : gamma(std::move(name) + ".gamma", {1}), r_th_(r_th) {
  if (r_th < 0.0 || r_th > std::sqrt(2.0) + 1e-12) throw std::invalid_argument("r_th must be in [0, sqrt(2)]");
  gamma.value[0] = gamma_init;
}

Tensor AFFLayer::forward(const Tensor& x, bool train) {
  if (x.ndim() != 3) throw std::invalid_argument("aff filter expects a [C,H,W] tensor");
  return filter_channels(x, r_th_, gamma.value[0], train ? &hp_ : nullptr);
}

Tensor AFFLayer::backward(const Tensor& gy) {
  if (hp_.empty()) throw std::logic_error("aff backward without a training forward");
  require_same_shape(gy, hp_, "aff backward");
  // d(out)/d(gamma) is the cached high-pass of the input; the filter itself
  // is self-adjoint (real symmetric mask), so gx is the filter applied to gy.
  gamma.grad[0] += gy.dot(hp_);
  return filter_channels(gy, r_th_, gamma.value[0], nullptr);
}

void AFFLayer::params(ParamList& out) { out.push_back(&gamma); }

}  // namespace ncdiff
