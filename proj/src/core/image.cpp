#include "ncdiff/image.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ncdiff {

Image to_signed(const Image& img) {
  if (img.range == Range::kSigned) return img;
  Image out(img.data, Range::kSigned);
  double* p = out.data.data();
  for (int64_t i = 0; i < out.data.numel(); ++i) p[i] = 2.0 * p[i] - 1.0;
  return out;
}

Image to_unit(const Image& img, bool clamp) {
  Image out = img;
  if (img.range == Range::kSigned) {
    out.range = Range::kUnit;
    double* p = out.data.data();
    for (int64_t i = 0; i < out.data.numel(); ++i) p[i] = (p[i] + 1.0) * 0.5;
  }
  if (clamp) out.data.clamp_(0.0, 1.0);
  return out;
}

void validate_image(const Image& img) {
  if (img.data.ndim() != 3) throw std::invalid_argument("image tensor must be [C,H,W], got " + img.data.shape_str());
  const int64_t c = img.channels();
  if (c != 1 && c != 3) throw std::invalid_argument("image must have 1 or 3 channels, got " + std::to_string(c));
  if (img.height() < 16 || img.width() < 16) {
    throw std::invalid_argument("image must be at least 16x16, got " + std::to_string(img.height()) + "x" +
                                std::to_string(img.width()));
  }
}

// Reflection index for position i in a length-n axis padded by p: positions
// n..n+p-1 map back to n-2, n-3, ... (the edge sample is not repeated).
static int64_t reflect_index(int64_t i, int64_t n) {
  return i < n ? i : 2 * n - 2 - i;
}

Tensor pad_reflect(const Tensor& x, int64_t pad_h, int64_t pad_w) {
  if (x.ndim() != 3) throw std::invalid_argument("pad_reflect expects [C,H,W]");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (pad_h >= h || pad_w >= w) throw std::invalid_argument("reflect pad must be smaller than the dimension");
  Tensor out({c, h + pad_h, w + pad_w});
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t y = 0; y < h + pad_h; ++y) {
      const int64_t sy = reflect_index(y, h);
      const double* row = x.data() + (ch * h + sy) * w;
      double* orow = out.data() + (ch * (h + pad_h) + y) * (w + pad_w);
      for (int64_t xx = 0; xx < w + pad_w; ++xx) orow[xx] = row[reflect_index(xx, w)];
    }
  }
  return out;
}

Tensor pad_reflect_adjoint(const Tensor& g, int64_t orig_h, int64_t orig_w) {
  if (g.ndim() != 3) throw std::invalid_argument("pad_reflect_adjoint expects [C,H,W]");
  const int64_t c = g.dim(0), ph = g.dim(1), pw = g.dim(2);
  if (ph < orig_h || pw < orig_w) throw std::invalid_argument("padded tensor smaller than original");
  Tensor out({c, orig_h, orig_w});
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t y = 0; y < ph; ++y) {
      const int64_t sy = reflect_index(y, orig_h);
      const double* grow = g.data() + (ch * ph + y) * pw;
      double* orow = out.data() + (ch * orig_h + sy) * orig_w;
      for (int64_t xx = 0; xx < pw; ++xx) orow[reflect_index(xx, orig_w)] += grow[xx];
    }
  }
  return out;
}

Tensor crop(const Tensor& x, int64_t h, int64_t w) {
  if (x.ndim() != 3) throw std::invalid_argument("crop expects [C,H,W]");
  const int64_t c = x.dim(0), xh = x.dim(1), xw = x.dim(2);
  if (h > xh || w > xw) throw std::invalid_argument("crop larger than source");
  Tensor out({c, h, w});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y) {
      const double* src = x.data() + (ch * xh + y) * xw;
      std::copy(src, src + w, out.data() + (ch * h + y) * w);
    }
  return out;
}

}  // namespace ncdiff
