#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "ncdiff/eval.hpp"
#include "ncdiff/fft.hpp"

namespace ncdiff {

namespace {

constexpr int64_t kBands = 8;
const double kSqrt2 = std::sqrt(2.0);

/// Normalized spectral radius of bin (u, v) with nearest-alias offsets, in
/// [0, sqrt(2)]: 0 at DC, sqrt(2) at the corner Nyquist bin.
double bin_radius(int64_t u, int64_t v, int64_t h, int64_t w) {
  const int64_t uu = (u <= h / 2) ? u : u - h;
  const int64_t vv = (v <= w / 2) ? v : v - w;
  const double fy = 2.0 * static_cast<double>(uu) / static_cast<double>(h);
  const double fx = 2.0 * static_cast<double>(vv) / static_cast<double>(w);
  return std::sqrt(fy * fy + fx * fx);
}

double pearson(const std::vector<double>& u, const std::vector<double>& v) {
  const double n = static_cast<double>(u.size());
  double mu = 0.0, mv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= n;
  mv /= n;
  double suu = 0.0, svv = 0.0, suv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    svv += (v[i] - mv) * (v[i] - mv);
    suv += (u[i] - mu) * (v[i] - mv);
  }
  if (suu <= 0.0 || svv <= 0.0) return 0.0;  // a constant field correlates with nothing
  return suv / std::sqrt(suu * svv);
}

/// Gradient magnitude of the channel-mean plane, central differences inside
/// and one-sided at the borders.
std::vector<double> gradient_magnitude(const Image& src) {
  const int64_t c = src.data.dim(0), h = src.data.dim(1), w = src.data.dim(2);
  std::vector<double> plane(static_cast<size_t>(h * w), 0.0);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) plane[static_cast<size_t>(y * w + x)] += src.data.at(ch, y, x);
  for (double& v : plane) v /= static_cast<double>(c);
  std::vector<double> out(plane.size());
  auto px = [&](int64_t y, int64_t x) { return plane[static_cast<size_t>(y * w + x)]; };
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double gx = x == 0         ? px(y, 1) - px(y, 0)
                        : x == w - 1   ? px(y, w - 1) - px(y, w - 2)
                                       : 0.5 * (px(y, x + 1) - px(y, x - 1));
      const double gy = y == 0         ? px(1, x) - px(0, x)
                        : y == h - 1   ? px(h - 1, x) - px(h - 2, x)
                                       : 0.5 * (px(y + 1, x) - px(y - 1, x));
      out[static_cast<size_t>(y * w + x)] = std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

}  // namespace

NoiseReport noise_report(const Image& eps_n, const Image& source_unit, int64_t bins) {
  require_same_shape(eps_n.data, source_unit.data, "noise_report");
  if (bins < 1) throw std::invalid_argument("noise_report: needs at least one histogram bin");
  const int64_t c = eps_n.data.dim(0), h = eps_n.data.dim(1), w = eps_n.data.dim(2);
  const int64_t n = eps_n.data.numel();
  const double* e = eps_n.data.data();

  NoiseReport rep;
  double sum = 0.0, sumsq = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    sum += e[i];
    sumsq += e[i] * e[i];
  }
  rep.mean = sum / static_cast<double>(n);
  rep.variance = sumsq / static_cast<double>(n) - rep.mean * rep.mean;

  const double m = std::max(eps_n.data.abs_max(), 1e-12);
  rep.hist_lo = -m;
  rep.hist_hi = m;
  rep.histogram.assign(static_cast<size_t>(bins), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    auto idx = static_cast<int64_t>((e[i] + m) / (2.0 * m) * static_cast<double>(bins));
    rep.histogram[static_cast<size_t>(std::clamp<int64_t>(idx, 0, bins - 1))] += 1.0;
  }
  for (double& v : rep.histogram) v /= static_cast<double>(n);

  rep.magnitude = Tensor({1, h, w});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) rep.magnitude.at(0, y, x) += std::abs(eps_n.data.at(ch, y, x));
  rep.magnitude.scale_(1.0 / static_cast<double>(c));

  rep.band_energy.assign(kBands, 0.0);
  std::vector<std::complex<double>> spec(static_cast<size_t>(h * w));
  for (int64_t ch = 0; ch < c; ++ch) {
    fft2(e + ch * h * w, spec.data(), h, w);
    for (int64_t u = 0; u < h; ++u)
      for (int64_t v = 0; v < w; ++v) {
        const double r = bin_radius(u, v, h, w);
        const auto band = std::min<int64_t>(kBands - 1, static_cast<int64_t>(r / kSqrt2 * kBands));
        rep.band_energy[static_cast<size_t>(band)] += std::norm(spec[static_cast<size_t>(u * w + v)]);
      }
  }
  double total_energy = 0.0;
  for (double v : rep.band_energy) total_energy += v;
  if (total_energy > 0.0)
    for (double& v : rep.band_energy) v /= total_energy;

  std::vector<double> mag_flat(static_cast<size_t>(h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) mag_flat[static_cast<size_t>(y * w + x)] = rep.magnitude.at(0, y, x);
  rep.edge_correlation = pearson(mag_flat, gradient_magnitude(source_unit));
  return rep;
}

NoiseReport noise_statistics(const Image& source_unit, CodecModel& codec, QuantizerMode mode, Rng* rng,
                             int64_t bins) {
  const Image eps = codec.residual_noise(source_unit, mode, rng);
  return noise_report(eps, source_unit, bins);
}

}  // namespace ncdiff
