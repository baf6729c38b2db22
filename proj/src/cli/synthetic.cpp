#include "ncdiff/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace ncdiff {

Image synth_textured(int64_t h, int64_t w, int64_t channels, Rng& rng) {
  Image img = Image::unit(channels, h, w);

  // Bilinear gradient between four random corner intensities.
  double corners[4];
  for (double& c : corners) c = rng.uniform(0.25, 0.75);
  for (int64_t y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / (h - 1);
    for (int64_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / (w - 1);
      const double v = corners[0] * (1 - fy) * (1 - fx) + corners[1] * (1 - fy) * fx + corners[2] * fy * (1 - fx) +
                       corners[3] * fy * fx;
      for (int64_t c = 0; c < channels; ++c) img.data.at(c, y, x) = v;
    }
  }

  // Hard-edged shapes. Channel offsets keep RGB variants correlated but
  // not identical.
  const int64_t num_shapes = rng.uniform_int(4, 8);
  for (int64_t s = 0; s < num_shapes; ++s) {
    const bool disk = rng.uniform() < 0.5;
    const double intensity = rng.uniform(0.05, 0.95);
    std::vector<double> level(channels);
    for (int64_t c = 0; c < channels; ++c)
      level[c] = std::clamp(intensity + (channels > 1 ? rng.uniform(-0.15, 0.15) : 0.0), 0.0, 1.0);
    if (disk) {
      const double cy = rng.uniform(0.1, 0.9) * h, cx = rng.uniform(0.1, 0.9) * w;
      const double r = rng.uniform(0.05, 0.25) * std::min(h, w);
      const double r2 = r * r;
      for (int64_t y = std::max<int64_t>(0, static_cast<int64_t>(cy - r) - 1);
           y < std::min(h, static_cast<int64_t>(cy + r) + 2); ++y)
        for (int64_t x = std::max<int64_t>(0, static_cast<int64_t>(cx - r) - 1);
             x < std::min(w, static_cast<int64_t>(cx + r) + 2); ++x) {
          const double dy = y - cy, dx = x - cx;
          if (dy * dy + dx * dx <= r2)
            for (int64_t c = 0; c < channels; ++c) img.data.at(c, y, x) = level[c];
        }
    } else {
      const int64_t y0 = rng.uniform_int(0, h - 2), x0 = rng.uniform_int(0, w - 2);
      const int64_t y1 = rng.uniform_int(y0 + 1, h - 1), x1 = rng.uniform_int(x0 + 1, w - 1);
      for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x)
          for (int64_t c = 0; c < channels; ++c) img.data.at(c, y, x) = level[c];
    }
  }

  // Low-amplitude oriented sinusoid over the whole frame.
  const double amp = rng.uniform(0.02, 0.06);
  const double fx = rng.uniform(0.02, 0.2), fy = rng.uniform(0.02, 0.2);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double t = amp * std::sin(2.0 * M_PI * (fx * x + fy * y) + phase);
      for (int64_t c = 0; c < channels; ++c) img.data.at(c, y, x) += t;
    }

  img.data.clamp_(0.0, 1.0);
  return img;
}

std::vector<Tensor> synth_crops(int64_t count, int64_t h, int64_t w, int64_t channels, Rng& rng) {
  std::vector<Tensor> out;
  out.reserve(count);
  for (int64_t i = 0; i < count; ++i) out.push_back(synth_textured(h, w, channels, rng).data);
  return out;
}

}  // namespace ncdiff
