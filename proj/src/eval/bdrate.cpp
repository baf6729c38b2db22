#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncdiff/eval.hpp"

namespace ncdiff {

namespace {

double quality_of(const RDPoint& p, RDMetric metric) {
  switch (metric) {
    case RDMetric::kPsnr:
      return p.psnr_db;
    case RDMetric::kMsSsim:
      return p.ms_ssim;
    case RDMetric::kPerceptual:
      if (std::isnan(p.perceptual))
        throw std::invalid_argument("bd_rate: curve point lacks a perceptual score");
      return -p.perceptual;  // distance, so negate into a quality
  }
  throw std::logic_error("bd_rate: unknown metric");
}

struct QualityRate {
  std::vector<double> q;       // strictly increasing quality
  std::vector<double> log_r;   // ln(bpp) at each quality
};

QualityRate extract(const RDCurve& curve, RDMetric metric) {
  if (curve.points.size() < 4)
    throw std::invalid_argument("bd_rate: curve '" + curve.codec_id + "' has " +
                                std::to_string(curve.points.size()) + " points, needs at least 4");
  std::vector<RDPoint> pts = curve.points;
  std::sort(pts.begin(), pts.end(),
            [metric](const RDPoint& a, const RDPoint& b) { return quality_of(a, metric) < quality_of(b, metric); });
  QualityRate out;
  for (const RDPoint& p : pts) {
    if (p.bpp <= 0.0) throw std::invalid_argument("bd_rate: non-positive bpp on curve '" + curve.codec_id + "'");
    const double q = quality_of(p, metric);
    if (!out.q.empty() && q <= out.q.back())
      throw std::invalid_argument("bd_rate: curve '" + curve.codec_id + "' has duplicate quality values");
    out.q.push_back(q);
    out.log_r.push_back(std::log(p.bpp));
  }
  return out;
}

/// Monotonicity-preserving slopes (Fritsch-Carlson construction).
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  std::vector<double> h(n - 1), delta(n - 1), d(n);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  for (size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      d[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto endpoint = [](double h0, double h1, double del0, double del1) {
    double s = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if (s * del0 <= 0.0)
      s = 0.0;
    else if (del0 * del1 < 0.0 && std::abs(s) > 3.0 * std::abs(del0))
      s = 3.0 * del0;
    return s;
  };
  d[0] = endpoint(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return d;
}

/// Exact integral of the Hermite interpolant between lo and hi.
double pchip_integral(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi) {
  const std::vector<double> d = pchip_slopes(x, y);
  double total = 0.0;
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = std::max(lo, x[i]), b = std::min(hi, x[i + 1]);
    if (a >= b) continue;
    const double h = x[i + 1] - x[i];
    // Cubic in normalized position s: y_i + (h d_i) s + c2 s^2 + c3 s^3.
    const double c1 = h * d[i];
    const double c2 = -3.0 * y[i] - 2.0 * h * d[i] + 3.0 * y[i + 1] - h * d[i + 1];
    const double c3 = 2.0 * y[i] + h * d[i] - 2.0 * y[i + 1] + h * d[i + 1];
    auto antiderivative = [&](double s) {
      return y[i] * s + c1 * s * s / 2.0 + c2 * s * s * s / 3.0 + c3 * s * s * s * s / 4.0;
    };
    const double s0 = (a - x[i]) / h, s1 = (b - x[i]) / h;
    total += h * (antiderivative(s1) - antiderivative(s0));
  }
  return total;
}

}  // namespace

double bd_rate(const RDCurve& anchor, const RDCurve& test, RDMetric metric) {
  const QualityRate qa = extract(anchor, metric);
  const QualityRate qt = extract(test, metric);
  const double lo = std::max(qa.q.front(), qt.q.front());
  const double hi = std::min(qa.q.back(), qt.q.back());
  if (hi <= lo)
    throw std::invalid_argument("bd_rate: curves '" + anchor.codec_id + "' and '" + test.codec_id +
                                "' share no quality range");
  const double ia = pchip_integral(qa.q, qa.log_r, lo, hi);
  const double it = pchip_integral(qt.q, qt.log_r, lo, hi);
  const double avg_log_ratio = (it - ia) / (hi - lo);
  return (std::exp(avg_log_ratio) - 1.0) * 100.0;
}

}  // namespace ncdiff
