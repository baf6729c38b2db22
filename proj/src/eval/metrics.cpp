#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncdiff/eval.hpp"
#include "ncdiff/log.hpp"

namespace ncdiff {

namespace {

constexpr int64_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (k1 * L)^2 with unit peak
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, 5> kScaleWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (int64_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i - kWindow / 2);
    w[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += w[static_cast<size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

/// Valid-mode separable Gaussian filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& x, int64_t h, int64_t w) {
  static const std::array<double, kWindow> win = gaussian_window();
  const int64_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<size_t>(h * ow));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t ox = 0; ox < ow; ++ox) {
      double acc = 0.0;
      for (int64_t k = 0; k < kWindow; ++k) acc += win[static_cast<size_t>(k)] * x[static_cast<size_t>(y * w + ox + k)];
      rows[static_cast<size_t>(y * ow + ox)] = acc;
    }
  std::vector<double> out(static_cast<size_t>(oh * ow));
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox) {
      double acc = 0.0;
      for (int64_t k = 0; k < kWindow; ++k) acc += win[static_cast<size_t>(k)] * rows[static_cast<size_t>((oy + k) * ow + ox)];
      out[static_cast<size_t>(oy * ow + ox)] = acc;
    }
  return out;
}

std::vector<double> downsample2(const std::vector<double>& x, int64_t h, int64_t w) {
  const int64_t oh = h / 2, ow = w / 2;
  std::vector<double> out(static_cast<size_t>(oh * ow));
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t xx = 0; xx < ow; ++xx)
      out[static_cast<size_t>(y * ow + xx)] =
          0.25 * (x[static_cast<size_t>(2 * y * w + 2 * xx)] + x[static_cast<size_t>(2 * y * w + 2 * xx + 1)] +
                  x[static_cast<size_t>((2 * y + 1) * w + 2 * xx)] +
                  x[static_cast<size_t>((2 * y + 1) * w + 2 * xx + 1)]);
  return out;
}

struct ScaleScore {
  double luminance = 0.0;
  double contrast_structure = 0.0;
};

/// Terms are arranged around difference planes: with s = 2 mu_a mu_b + C1
/// the luminance denominator mu_a^2 + mu_b^2 + C1 equals (mu_a - mu_b)^2 + s,
/// and with n = 2 cov + C2 the contrast denominator va + vb + C2 equals
/// var(a - b) + n. Identical inputs then hit s/s and n/n, which is exactly
/// one, and swapping the arguments only flips signs inside squares, so the
/// score is symmetric no matter how the compiler contracts the arithmetic.
ScaleScore ssim_scale(const std::vector<double>& a, const std::vector<double>& b, int64_t h, int64_t w) {
  std::vector<double> ab(a.size()), d(a.size()), dd(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    ab[i] = a[i] * b[i];
    d[i] = a[i] - b[i];
    dd[i] = d[i] * d[i];
  }
  const std::vector<double> mu_a = filter_valid(a, h, w);
  const std::vector<double> mu_b = filter_valid(b, h, w);
  const std::vector<double> m_ab = filter_valid(ab, h, w);
  const std::vector<double> mu_d = filter_valid(d, h, w);
  const std::vector<double> m_dd = filter_valid(dd, h, w);
  double lum = 0.0, cs = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double s = 2.0 * mu_a[i] * mu_b[i] + kC1;
    const double dmu = mu_a[i] - mu_b[i];
    lum += s / (dmu * dmu + s);
    const double cov = m_ab[i] - mu_a[i] * mu_b[i];
    const double var_d = m_dd[i] - mu_d[i] * mu_d[i];
    const double n = 2.0 * cov + kC2;
    cs += n / (var_d + n);
  }
  const double count = static_cast<double>(mu_a.size());
  return ScaleScore{lum / count, cs / count};
}

double ms_ssim_plane(std::vector<double> a, std::vector<double> b, int64_t h, int64_t w, int64_t scales) {
  double value = 1.0;
  double lum_last = 1.0;
  std::array<double, 5> weights = kScaleWeights;
  if (scales < 5) {
    double total = 0.0;
    for (int64_t j = 0; j < scales; ++j) total += weights[static_cast<size_t>(j)];
    for (int64_t j = 0; j < scales; ++j) weights[static_cast<size_t>(j)] /= total;
  }
  for (int64_t j = 0; j < scales; ++j) {
    const ScaleScore s = ssim_scale(a, b, h, w);
    // Negative covariance can push cs slightly below zero; clamp before the
    // fractional power.
    value *= std::pow(std::max(s.contrast_structure, 0.0), weights[static_cast<size_t>(j)]);
    lum_last = s.luminance;
    if (j + 1 < scales) {
      a = downsample2(a, h, w);
      b = downsample2(b, h, w);
      h /= 2;
      w /= 2;
    }
  }
  value *= std::pow(std::max(lum_last, 0.0), weights[static_cast<size_t>(scales - 1)]);
  return value;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a.data, b.data, "psnr");
  if (a.range != Range::kUnit || b.range != Range::kUnit)
    throw std::invalid_argument("psnr: expects unit-range images");
  const double err = mse(a.data, b.data);
  if (err <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / err));
}

double ms_ssim(const Image& a, const Image& b) {
  require_same_shape(a.data, b.data, "ms_ssim");
  if (a.range != Range::kUnit || b.range != Range::kUnit)
    throw std::invalid_argument("ms_ssim: expects unit-range images");
  const int64_t c = a.data.dim(0), h = a.data.dim(1), w = a.data.dim(2);

  int64_t scales = 5;
  while (scales > 1 && (std::min(h, w) >> (scales - 1)) < kWindow) --scales;
  if ((std::min(h, w) >> (scales - 1)) < kWindow)
    throw std::invalid_argument("ms_ssim: image smaller than the 11x11 window");
  if (scales < 5)
    log_warn("ms_ssim: " + std::to_string(h) + "x" + std::to_string(w) + " image supports only " +
             std::to_string(scales) + " of 5 scales; weights renormalized");

  double total = 0.0;
  for (int64_t ch = 0; ch < c; ++ch) {
    std::vector<double> pa(static_cast<size_t>(h * w)), pb(pa.size());
    const double* ad = a.data.data() + ch * h * w;
    const double* bd = b.data.data() + ch * h * w;
    std::copy(ad, ad + h * w, pa.begin());
    std::copy(bd, bd + h * w, pb.begin());
    total += ms_ssim_plane(std::move(pa), std::move(pb), h, w, scales);
  }
  return total / static_cast<double>(c);
}

}  // namespace ncdiff
