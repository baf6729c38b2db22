#include "ncdiff/eval.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "ncdiff/log.hpp"
#include "ncdiff/rng.hpp"
#include "ncdiff/synthetic.hpp"

using namespace ncdiff;

namespace {

Image random_unit(int64_t c, int64_t h, int64_t w, uint64_t seed) {
  Image img = Image::unit(c, h, w);
  Rng rng(seed);
  rng.fill_uniform(img.data, 0.0, 1.0);
  return img;
}

RDCurve make_curve(const std::string& id, const std::vector<double>& bpp, const std::vector<double>& q,
                   RDMetric metric) {
  RDCurve c;
  c.codec_id = id;
  for (size_t i = 0; i < bpp.size(); ++i) {
    RDPoint p;
    p.bpp = bpp[i];
    if (metric == RDMetric::kPsnr)
      p.psnr_db = q[i];
    else if (metric == RDMetric::kMsSsim)
      p.ms_ssim = q[i];
    else
      p.perceptual = q[i];
    c.points.push_back(p);
  }
  return c;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const Image a = random_unit(3, 32, 32, 1);
  CHECK(psnr(a, a) == 100.0);

  const Image zeros = Image::unit(1, 32, 32);
  const Image ones(Tensor::full({1, 32, 32}, 1.0), Range::kUnit);
  CHECK(psnr(zeros, ones) == doctest::Approx(0.0).epsilon(1e-12));

  Image shifted = zeros;
  shifted.data.fill(0.1);
  CHECK(psnr(zeros, shifted) == doctest::Approx(20.0).epsilon(1e-9));

  const Image b = random_unit(3, 32, 32, 2);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK_THROWS_AS(psnr(a, random_unit(3, 32, 48, 3)), std::invalid_argument);
  Image signed_img = a;
  signed_img.range = Range::kSigned;
  CHECK_THROWS_AS(psnr(a, signed_img), std::invalid_argument);
}

TEST_CASE("ms_ssim identical images score exactly one at full scale count") {
  const int64_t before = warn_count();
  const Image a = random_unit(3, 176, 176, 11);
  CHECK(ms_ssim(a, a) == 1.0);
  CHECK(warn_count() == before);  // five scales fit, no fallback
}

TEST_CASE("ms_ssim is symmetric and separates noise levels") {
  const Image a = random_unit(1, 176, 176, 21);
  const Image b = random_unit(1, 176, 176, 22);
  CHECK(ms_ssim(a, b) == ms_ssim(b, a));
  CHECK(ms_ssim(a, b) < 0.2);  // independent noise shares no structure

  Rng base_rng(23);
  const Image base = synth_textured(176, 176, 1, base_rng);
  Rng noise_rng(24);
  Image mild = base;
  Tensor n1(mild.data.shape());
  noise_rng.fill_uniform(n1, -0.02, 0.02);
  mild.data.add_(n1);
  mild.data.clamp_(0.0, 1.0);
  Image harsh = base;
  Tensor n2(harsh.data.shape());
  noise_rng.fill_uniform(n2, -0.3, 0.3);
  harsh.data.add_(n2);
  harsh.data.clamp_(0.0, 1.0);
  CHECK(ms_ssim(base, mild) > ms_ssim(base, harsh));
  CHECK(ms_ssim(base, mild) > 0.9);
}

TEST_CASE("ms_ssim falls back to fewer scales on small images") {
  const int64_t before = warn_count();
  const Image a = random_unit(1, 64, 64, 31);
  CHECK(ms_ssim(a, a) == 1.0);
  CHECK(warn_count() == before + 1);
  CHECK_THROWS_AS(ms_ssim(random_unit(1, 8, 8, 32), random_unit(1, 8, 8, 33)), std::invalid_argument);
}

TEST_CASE("bd_rate closed forms") {
  const std::vector<double> bpp = {0.25, 0.5, 1.0, 2.0};
  const std::vector<double> q = {30.0, 33.0, 36.0, 39.0};
  const RDCurve anchor = make_curve("anchor", bpp, q, RDMetric::kPsnr);
  CHECK(bd_rate(anchor, anchor, RDMetric::kPsnr) == 0.0);

  std::vector<double> doubled = bpp;
  for (double& v : doubled) v *= 2.0;
  const RDCurve twice = make_curve("twice", doubled, q, RDMetric::kPsnr);
  CHECK(bd_rate(anchor, twice, RDMetric::kPsnr) == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(bd_rate(twice, anchor, RDMetric::kPsnr) == doctest::Approx(-50.0).epsilon(1e-9));
}

TEST_CASE("bd_rate antisymmetry identity") {
  const RDCurve a = make_curve("a", {0.25, 0.5, 1.0, 2.0}, {30.0, 33.0, 36.0, 39.0}, RDMetric::kPsnr);
  const RDCurve b =
      make_curve("b", {0.23, 0.46, 0.92, 1.84}, {31.2, 34.0, 36.8, 39.6}, RDMetric::kPsnr);
  const double ab = bd_rate(a, b, RDMetric::kPsnr);
  const double ba = bd_rate(b, a, RDMetric::kPsnr);
  const double reconstructed = -ba / (1.0 + ba / 100.0);
  CHECK(std::abs(ab - reconstructed) <= 0.5);
}

TEST_CASE("bd_rate works on the ms-ssim and perceptual axes") {
  const std::vector<double> bpp = {0.2, 0.4, 0.8, 1.6};
  const RDCurve a = make_curve("a", bpp, {0.90, 0.94, 0.97, 0.99}, RDMetric::kMsSsim);
  std::vector<double> doubled = bpp;
  for (double& v : doubled) v *= 2.0;
  const RDCurve b = make_curve("b", doubled, {0.90, 0.94, 0.97, 0.99}, RDMetric::kMsSsim);
  CHECK(bd_rate(a, b, RDMetric::kMsSsim) == doctest::Approx(100.0).epsilon(1e-9));

  // Perceptual scores are distances: lower is better, negated internally.
  const RDCurve pa = make_curve("pa", bpp, {0.40, 0.30, 0.22, 0.15}, RDMetric::kPerceptual);
  const RDCurve pb = make_curve("pb", doubled, {0.40, 0.30, 0.22, 0.15}, RDMetric::kPerceptual);
  CHECK(bd_rate(pa, pb, RDMetric::kPerceptual) == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(bd_rate(pa, pa, RDMetric::kPerceptual) == 0.0);

  const RDCurve no_perc = make_curve("np", bpp, {30.0, 33.0, 36.0, 39.0}, RDMetric::kPsnr);
  CHECK_THROWS_AS(bd_rate(no_perc, no_perc, RDMetric::kPerceptual), std::invalid_argument);
}

TEST_CASE("bd_rate validates curves") {
  const RDCurve three = make_curve("three", {0.25, 0.5, 1.0}, {30.0, 33.0, 36.0}, RDMetric::kPsnr);
  const RDCurve four = make_curve("four", {0.25, 0.5, 1.0, 2.0}, {30.0, 33.0, 36.0, 39.0}, RDMetric::kPsnr);
  CHECK_THROWS_AS(bd_rate(three, four, RDMetric::kPsnr), std::invalid_argument);

  const RDCurve high = make_curve("high", {0.25, 0.5, 1.0, 2.0}, {50.0, 53.0, 56.0, 59.0}, RDMetric::kPsnr);
  CHECK_THROWS_AS(bd_rate(four, high, RDMetric::kPsnr), std::invalid_argument);

  const RDCurve flat = make_curve("flat", {0.25, 0.5, 1.0, 2.0}, {30.0, 30.0, 36.0, 39.0}, RDMetric::kPsnr);
  CHECK_THROWS_AS(bd_rate(flat, four, RDMetric::kPsnr), std::invalid_argument);

  RDCurve bad_bpp = four;
  bad_bpp.points[0].bpp = 0.0;
  CHECK_THROWS_AS(bd_rate(bad_bpp, four, RDMetric::kPsnr), std::invalid_argument);
}

TEST_CASE("noise_report histogram and moments") {
  Rng rng(41);
  const Image src = synth_textured(32, 32, 1, rng);
  Image eps = Image::signed_(1, 32, 32);
  rng.fill_uniform(eps.data, -0.3, 0.3);

  const NoiseReport rep = noise_report(eps, src);
  CHECK(rep.histogram.size() == 101);
  CHECK(std::accumulate(rep.histogram.begin(), rep.histogram.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.hist_lo == -rep.hist_hi);
  CHECK(rep.mean == doctest::Approx(eps.data.mean()).epsilon(1e-12));
  const double expected_var = mse(eps.data, Tensor::full(eps.data.shape(), rep.mean));
  CHECK(rep.variance == doctest::Approx(expected_var).epsilon(1e-9));
  CHECK(rep.magnitude.dim(0) == 1);
  CHECK(rep.magnitude.min() >= 0.0);
  CHECK(std::accumulate(rep.band_energy.begin(), rep.band_energy.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("noise_report spectral bands localize frequency content") {
  const Image src = Image::unit(1, 32, 32);
  Image dc = Image::signed_(1, 32, 32);
  dc.data.fill(0.25);
  const NoiseReport low = noise_report(dc, src);
  CHECK(low.band_energy[0] == doctest::Approx(1.0).epsilon(1e-12));

  Image checker = Image::signed_(1, 32, 32);
  for (int64_t y = 0; y < 32; ++y)
    for (int64_t x = 0; x < 32; ++x) checker.data.at(0, y, x) = ((x + y) % 2 == 0) ? 0.25 : -0.25;
  const NoiseReport high = noise_report(checker, src);
  CHECK(high.band_energy.back() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("noise_report edge correlation separates structured from white noise") {
  Rng rng(43);
  const Image src = synth_textured(64, 64, 1, rng);

  // Control: noise drawn independently of the image has no edge preference.
  Image gaussian = Image::signed_(1, 64, 64);
  rng.fill_normal(gaussian.data, 0.0, 0.05);
  const NoiseReport control = noise_report(gaussian, src);
  CHECK(std::abs(control.edge_correlation) < 0.05);

  // Structured: noise amplitude proportional to local contrast.
  Image structured = Image::signed_(1, 64, 64);
  Tensor sign(structured.data.shape());
  rng.fill_uniform(sign, -1.0, 1.0);
  for (int64_t y = 0; y < 64; ++y)
    for (int64_t x = 0; x < 64; ++x) {
      const double right = src.data.at(0, y, std::min<int64_t>(x + 1, 63));
      const double down = src.data.at(0, std::min<int64_t>(y + 1, 63), x);
      const double contrast =
          std::abs(right - src.data.at(0, y, x)) + std::abs(down - src.data.at(0, y, x));
      structured.data.at(0, y, x) = contrast * sign.at(0, y, x);
    }
  const NoiseReport corr = noise_report(structured, src);
  CHECK(corr.edge_correlation > 0.5);
}

TEST_CASE("noise_statistics runs a real codec residual through the report") {
  CodecConfig cfg;
  cfg.in_channels = 1;
  cfg.hidden = 8;
  cfg.latent_channels = 4;
  CodecModel codec(cfg, 44);
  Rng rng(45);
  const Image src = synth_textured(32, 32, 1, rng);
  const NoiseReport rep = noise_statistics(src, codec, QuantizerMode::kTestRound);
  CHECK(std::accumulate(rep.histogram.begin(), rep.histogram.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isfinite(rep.edge_correlation));
  CHECK(rep.edge_correlation >= -1.0);
  CHECK(rep.edge_correlation <= 1.0);
}

TEST_CASE("rd csv schema and optional perceptual column") {
  RDRow a{"elic-mini", "initial", "synthetic", 0.52, 31.7, 0.952, 0.21};
  RDRow b{"elic-mini", "nc-diffusion", "synthetic", 0.52, 32.4, 0.961,
          std::numeric_limits<double>::quiet_NaN()};
  const std::string csv = rd_csv_string({a, b});
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "codec_id,variant,dataset,bpp,psnr,ms_ssim,perceptual");
  std::getline(is, line);
  CHECK(line == "elic-mini,initial,synthetic,0.52,31.7,0.952,0.21");
  std::getline(is, line);
  CHECK(line == "elic-mini,nc-diffusion,synthetic,0.52,32.4,0.961,");
  CHECK(!std::getline(is, line));  // exactly header + one row per entry
}

TEST_CASE("rd svg plot is deterministic and carries the expected structure") {
  const RDCurve a = make_curve("initial", {0.25, 0.5, 1.0, 2.0}, {30.0, 33.0, 36.0, 39.0}, RDMetric::kPsnr);
  const RDCurve b = make_curve("nc-diffusion", {0.25, 0.5, 1.0, 2.0}, {30.8, 33.7, 36.6, 39.4}, RDMetric::kPsnr);
  const std::string svg = rd_svg_string({a, b}, RDMetric::kPsnr, "synthetic desk run");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("bits per pixel") != std::string::npos);
  CHECK(svg.find("PSNR (dB)") != std::string::npos);
  CHECK(svg.find("nc-diffusion") != std::string::npos);
  CHECK(svg == rd_svg_string({a, b}, RDMetric::kPsnr, "synthetic desk run"));
  CHECK_THROWS_AS(rd_svg_string({}, RDMetric::kPsnr, "empty"), std::invalid_argument);

  const std::string path = "/tmp/ncdiff_test_rd.svg";
  write_rd_svg(path, {a, b}, RDMetric::kPsnr, "synthetic desk run");
  std::ifstream f(path);
  CHECK(f.good());
  std::stringstream buf;
  buf << f.rdbuf();
  CHECK(buf.str() == svg);
  std::remove(path.c_str());
}
