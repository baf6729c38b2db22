#include "ncdiff/wavelet.hpp"

#include <stdexcept>

#include "ncdiff/image.hpp"

namespace ncdiff {
namespace {

// Orthonormal 2x2 Haar analysis: every coefficient is a +-1 combination of
// the block divided by 2, so analysis and synthesis are transposes of each
// other and energy is preserved exactly. H responds to changes across
// columns, V to changes across rows, D to the checkerboard component.
void haar_level_forward(const Tensor& x, Tensor& ll, Tensor& h, Tensor& v, Tensor& d) {
  const int64_t c = x.dim(0), ih = x.dim(1), iw = x.dim(2);
  const int64_t oh = ih / 2, ow = iw / 2;
  ll = Tensor({c, oh, ow});
  h = Tensor({c, oh, ow});
  v = Tensor({c, oh, ow});
  d = Tensor({c, oh, ow});
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        const double a = x.at(ch, 2 * i, 2 * j);
        const double b = x.at(ch, 2 * i, 2 * j + 1);
        const double e = x.at(ch, 2 * i + 1, 2 * j);
        const double f = x.at(ch, 2 * i + 1, 2 * j + 1);
        ll.at(ch, i, j) = 0.5 * (a + b + e + f);
        h.at(ch, i, j) = 0.5 * (a - b + e - f);
        v.at(ch, i, j) = 0.5 * (a + b - e - f);
        d.at(ch, i, j) = 0.5 * (a - b - e + f);
      }
    }
  }
}

Tensor haar_level_inverse(const Tensor& ll, const Tensor& h, const Tensor& v, const Tensor& d) {
  const int64_t c = ll.dim(0), oh = ll.dim(1), ow = ll.dim(2);
  Tensor x({c, oh * 2, ow * 2});
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        const double s = ll.at(ch, i, j);
        const double hh = h.at(ch, i, j);
        const double vv = v.at(ch, i, j);
        const double dd = d.at(ch, i, j);
        x.at(ch, 2 * i, 2 * j) = 0.5 * (s + hh + vv + dd);
        x.at(ch, 2 * i, 2 * j + 1) = 0.5 * (s - hh + vv - dd);
        x.at(ch, 2 * i + 1, 2 * j) = 0.5 * (s + hh - vv - dd);
        x.at(ch, 2 * i + 1, 2 * j + 1) = 0.5 * (s - hh - vv + dd);
      }
    }
  }
  return x;
}

int64_t round_up(int64_t n, int64_t m) { return (n + m - 1) / m * m; }

// Inverse without the final crop, i.e. back to the padded resolution. Since
// the transform is orthonormal this is also its adjoint, which the loss
// gradient needs.
Tensor idwt_padded(const WaveletPyramid& p) {
  if (p.levels.empty()) throw std::invalid_argument("wavelet pyramid has no levels");
  Tensor cur = p.LL;
  for (int64_t i = p.K() - 1; i >= 0; --i) {
    const auto& lv = p.levels[static_cast<size_t>(i)];
    cur = haar_level_inverse(cur, lv.H, lv.V, lv.D);
  }
  return cur;
}

}  // namespace

WaveletPyramid dwt_multilevel(const Tensor& x, int64_t K) {
  if (x.ndim() != 3) throw std::invalid_argument("dwt_multilevel expects a [C,H,W] tensor");
  if (K < 1) throw std::invalid_argument("wavelet levels must be >= 1");
  WaveletPyramid p;
  p.orig_h = x.dim(1);
  p.orig_w = x.dim(2);
  const int64_t mult = int64_t{1} << K;
  const int64_t ph = round_up(p.orig_h, mult);
  const int64_t pw = round_up(p.orig_w, mult);
  if (ph - p.orig_h >= p.orig_h || pw - p.orig_w >= p.orig_w) {
    throw std::invalid_argument("image too small for requested wavelet levels");
  }
  Tensor cur = (ph == p.orig_h && pw == p.orig_w) ? x : pad_reflect(x, ph - p.orig_h, pw - p.orig_w);
  p.levels.resize(static_cast<size_t>(K));
  for (int64_t i = 0; i < K; ++i) {
    auto& lv = p.levels[static_cast<size_t>(i)];
    Tensor ll;
    haar_level_forward(cur, ll, lv.H, lv.V, lv.D);
    cur = std::move(ll);
  }
  p.LL = std::move(cur);
  return p;
}

Tensor idwt_multilevel(const WaveletPyramid& p) {
  Tensor full = idwt_padded(p);
  if (full.dim(1) == p.orig_h && full.dim(2) == p.orig_w) return full;
  return crop(full, p.orig_h, p.orig_w);
}

double high_freq_loss(const Tensor& a, const Tensor& b, int64_t K) {
  return high_freq_loss_backward(a, b, K, nullptr, nullptr, 0.0);
}

double high_freq_loss_backward(const Tensor& a, const Tensor& b, int64_t K, Tensor* ga, Tensor* gb, double scale) {
  require_same_shape(a, b, "high frequency loss");
  WaveletPyramid pa = dwt_multilevel(a, K);
  WaveletPyramid pb = dwt_multilevel(b, K);
  const bool want_grad = ga != nullptr || gb != nullptr;

  double loss = 0.0;
  WaveletPyramid gp;  // holds d(loss)/d(subbands of a); b's gradient is its negative
  if (want_grad) {
    gp.orig_h = pa.orig_h;
    gp.orig_w = pa.orig_w;
    gp.levels.resize(pa.levels.size());
    gp.LL = Tensor(pa.LL.shape());  // approximation band carries no gradient
  }
  for (size_t i = 0; i < pa.levels.size(); ++i) {
    const Tensor* bands_a[3] = {&pa.levels[i].H, &pa.levels[i].V, &pa.levels[i].D};
    const Tensor* bands_b[3] = {&pb.levels[i].H, &pb.levels[i].V, &pb.levels[i].D};
    Tensor* bands_g[3] = {nullptr, nullptr, nullptr};
    if (want_grad) {
      gp.levels[i].H = Tensor(pa.levels[i].H.shape());
      gp.levels[i].V = Tensor(pa.levels[i].V.shape());
      gp.levels[i].D = Tensor(pa.levels[i].D.shape());
      bands_g[0] = &gp.levels[i].H;
      bands_g[1] = &gp.levels[i].V;
      bands_g[2] = &gp.levels[i].D;
    }
    for (int s = 0; s < 3; ++s) {
      const Tensor& ba = *bands_a[s];
      const Tensor& bb = *bands_b[s];
      const double inv_n = 1.0 / static_cast<double>(ba.numel());
      double acc = 0.0;
      for (int64_t k = 0; k < ba.numel(); ++k) {
        const double diff = ba.data()[k] - bb.data()[k];
        acc += diff * diff;
        if (want_grad) bands_g[s]->data()[k] = 2.0 * diff * inv_n;
      }
      loss += acc * inv_n;
    }
  }
  if (!want_grad) return loss;

  // Orthonormal transform: adjoint of analysis is synthesis; the reflect
  // padding folds back onto the source pixels.
  Tensor g_padded = idwt_padded(gp);
  Tensor g = (g_padded.dim(1) == pa.orig_h && g_padded.dim(2) == pa.orig_w)
                 ? g_padded
                 : pad_reflect_adjoint(g_padded, pa.orig_h, pa.orig_w);
  if (ga != nullptr) {
    for (int64_t k = 0; k < g.numel(); ++k) ga->data()[k] += scale * g.data()[k];
  }
  if (gb != nullptr) {
    for (int64_t k = 0; k < g.numel(); ++k) gb->data()[k] -= scale * g.data()[k];
  }
  return loss;
}

}  // namespace ncdiff
