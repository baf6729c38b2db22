#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ncdiff/codec.hpp"
#include "ncdiff/image.hpp"
#include "ncdiff/rng.hpp"
#include "ncdiff/tensor.hpp"

namespace ncdiff {

/// Peak signal-to-noise ratio in dB for unit-range images, capped at 100 dB
/// so identical inputs stay finite.
double psnr(const Image& a, const Image& b);

/// Multi-scale structural similarity, five scales with the standard weights
/// (0.0448, 0.2856, 0.3001, 0.2363, 0.1333) and an 11x11 Gaussian window
/// (sigma 1.5). Images too small for five scales fall back to however many
/// fit, with the weights renormalized and a warning logged. Channels are
/// scored independently and averaged.
double ms_ssim(const Image& a, const Image& b);

/// One measured operating point of a codec variant.
struct RDPoint {
  double bpp = 0.0;
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
  double perceptual = std::numeric_limits<double>::quiet_NaN();  // optional, NaN = absent
  std::string label;
};

struct RDCurve {
  std::string codec_id;
  std::vector<RDPoint> points;  // sorted by strictly increasing bpp
};

enum class RDMetric { kPsnr, kMsSsim, kPerceptual };

/// Average percent rate difference of `test` against `anchor` at equal
/// quality: monotone piecewise-cubic interpolation of ln(bpp) over the
/// shared quality interval, integrated analytically. Positive means `test`
/// spends more bits. Perceptual scores are distances, so that axis is
/// negated to make larger mean better. Needs >= 4 points per curve and
/// overlapping quality ranges.
double bd_rate(const RDCurve& anchor, const RDCurve& test, RDMetric metric);

/// Distributional and spatial summary of a residual-noise field.
struct NoiseReport {
  std::vector<double> histogram;    // probability mass per bin, sums to 1
  double hist_lo = 0.0;             // bin range, symmetric around zero
  double hist_hi = 0.0;
  Tensor magnitude;                 // [1,H,W]: |eps| averaged over channels
  std::vector<double> band_energy;  // radial spectral bands, fractions of total
  double mean = 0.0;
  double variance = 0.0;
  double edge_correlation = 0.0;    // Pearson r of |eps| against source edges
};

/// Shared report pipeline: statistics of an arbitrary noise field against
/// the unit-range source it rides on. Synthetic controls enter here.
NoiseReport noise_report(const Image& eps_n, const Image& source_unit, int64_t bins = 101);

/// Runs the source through the codec and reports on the actual residual.
NoiseReport noise_statistics(const Image& source_unit, CodecModel& codec, QuantizerMode mode,
                             Rng* rng = nullptr, int64_t bins = 101);

/// One CSV row of an RD sweep; perceptual stays blank when absent.
struct RDRow {
  std::string codec_id;
  std::string variant;
  std::string dataset;
  double bpp = 0.0;
  double psnr = 0.0;
  double ms_ssim = 0.0;
  double perceptual = std::numeric_limits<double>::quiet_NaN();
};

std::string rd_csv_string(const std::vector<RDRow>& rows);
void write_rd_csv(const std::string& path, const std::vector<RDRow>& rows);

/// Self-contained SVG line plot of RD curves (bpp on x, chosen metric on y).
std::string rd_svg_string(const std::vector<RDCurve>& curves, RDMetric y_axis,
                          const std::string& title);
void write_rd_svg(const std::string& path, const std::vector<RDCurve>& curves, RDMetric y_axis,
                  const std::string& title);

}  // namespace ncdiff
