#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ncdiff/nn.hpp"

namespace ncdiff {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->grad.zero();
}

namespace {

// Uniform Kaiming-style init on [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_uniform(Tensor& t, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  rng.fill_uniform(t, -bound, bound);
}

// im2col for [C,H,W] with square kernel: out is [C*k*k, Ho*Wo] row-major.
// Out-of-range taps read as zero (zero padding).
void im2col(const double* x, double* cols, int64_t c, int64_t h, int64_t w, int64_t k, int64_t stride, int64_t pad,
            int64_t ho, int64_t wo) {
  const int64_t n = ho * wo;
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        double* dst = cols + ((ch * k + ky) * k + kx) * n;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t sy = oy * stride - pad + ky;
          if (sy < 0 || sy >= h) {
            for (int64_t ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = 0.0;
            continue;
          }
          const double* src = x + (ch * h + sy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t sx = ox * stride - pad + kx;
            dst[oy * wo + ox] = (sx < 0 || sx >= w) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

// Exact adjoint of im2col: scatter-adds column entries back onto the image.
void col2im(const double* cols, double* x, int64_t c, int64_t h, int64_t w, int64_t k, int64_t stride, int64_t pad,
            int64_t ho, int64_t wo) {
  const int64_t n = ho * wo;
  for (int64_t i = 0; i < c * h * w; ++i) x[i] = 0.0;
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        const double* src = cols + ((ch * k + ky) * k + kx) * n;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t sy = oy * stride - pad + ky;
          if (sy < 0 || sy >= h) continue;
          double* dst = x + (ch * h + sy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t sx = ox * stride - pad + kx;
            if (sx >= 0 && sx < w) dst[sx] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

// Shared scratch for inference-mode im2col so tiled runs don't hold one
// buffer per layer.
std::vector<double>& scratch() {
  thread_local std::vector<double> buf;
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad, Rng& rng,
               bool zero_init)
    : w(name + ".weight", {cout, cin * k * k}),
      b(name + ".bias", {cout}),
      cin_(cin),
      cout_(cout),
      k_(k),
      stride_(stride),
      pad_(pad) {
  if (!zero_init) init_uniform(w.value, cin * k * k, rng);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  if (x.ndim() != 3 || x.dim(0) != cin_) throw std::invalid_argument("Conv2d: bad input " + x.shape_str());
  in_h_ = x.dim(1);
  in_w_ = x.dim(2);
  const int64_t ho = out_size(in_h_, k_, stride_, pad_);
  const int64_t wo = out_size(in_w_, k_, stride_, pad_);
  const int64_t rows = cin_ * k_ * k_, n = ho * wo;

  double* colp;
  if (train) {
    cols_ = Tensor({rows, n});
    colp = cols_.data();
  } else {
    auto& s = scratch();
    if (static_cast<int64_t>(s.size()) < rows * n) s.resize(rows * n);
    colp = s.data();
  }
  im2col(x.data(), colp, cin_, in_h_, in_w_, k_, stride_, pad_, ho, wo);

  Tensor y({cout_, ho, wo});
  EMap(y.data(), cout_, n).noalias() = ECMap(w.value.data(), cout_, rows) * ECMap(colp, rows, n);
  for (int64_t c = 0; c < cout_; ++c) {
    double* row = y.data() + c * n;
    const double bias = b.value[c];
    for (int64_t i = 0; i < n; ++i) row[i] += bias;
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  const int64_t ho = gy.dim(1), wo = gy.dim(2), n = ho * wo;
  const int64_t rows = cin_ * k_ * k_;
  if (cols_.numel() != rows * n) throw std::logic_error("Conv2d::backward without matching forward");

  ECMap g(gy.data(), cout_, n);
  EMap(w.grad.data(), cout_, rows).noalias() += g * ECMap(cols_.data(), rows, n).transpose();
  for (int64_t c = 0; c < cout_; ++c) {
    const double* row = gy.data() + c * n;
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += row[i];
    b.grad[c] += s;
  }

  Tensor gcols({rows, n});
  EMap(gcols.data(), rows, n).noalias() = ECMap(w.value.data(), cout_, rows).transpose() * g;
  Tensor gx({cin_, in_h_, in_w_});
  col2im(gcols.data(), gx.data(), cin_, in_h_, in_w_, k_, stride_, pad_, ho, wo);
  return gx;
}

void Conv2d::params(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int64_t cin, int64_t cout, Rng& rng)
    : w(name + ".weight", {cin, cout * kK * kK}), b(name + ".bias", {cout}), cin_(cin), cout_(cout) {
  init_uniform(w.value, cin * kK * kK, rng);
}

Tensor ConvTranspose2d::forward(const Tensor& x, bool train) {
  if (x.ndim() != 3 || x.dim(0) != cin_) throw std::invalid_argument("ConvTranspose2d: bad input " + x.shape_str());
  in_h_ = x.dim(1);
  in_w_ = x.dim(2);
  const int64_t oh = 2 * in_h_, ow = 2 * in_w_;
  const int64_t n = in_h_ * in_w_, rows = cout_ * kK * kK;

  // y = col2im(W^T x): the adjoint of the k=5, s=2, p=2 convolution that
  // maps [cout, 2h, 2w] down to [cin, h, w].
  Tensor gcols({rows, n});
  EMap(gcols.data(), rows, n).noalias() =
      ECMap(w.value.data(), cin_, rows).transpose() * ECMap(x.data(), cin_, n);
  Tensor y({cout_, oh, ow});
  col2im(gcols.data(), y.data(), cout_, oh, ow, kK, kStride, kPad, in_h_, in_w_);
  for (int64_t c = 0; c < cout_; ++c) {
    double* row = y.data() + c * oh * ow;
    const double bias = b.value[c];
    for (int64_t i = 0; i < oh * ow; ++i) row[i] += bias;
  }

  if (train) {
    x_ = Tensor({cin_, n});
    std::copy(x.data(), x.data() + cin_ * n, x_.data());
  } else {
    x_ = Tensor();
  }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& gy) {
  const int64_t oh = 2 * in_h_, ow = 2 * in_w_;
  if (gy.dim(0) != cout_ || gy.dim(1) != oh || gy.dim(2) != ow)
    throw std::logic_error("ConvTranspose2d::backward shape mismatch");
  const int64_t n = in_h_ * in_w_, rows = cout_ * kK * kK;

  Tensor cols({rows, n});
  im2col(gy.data(), cols.data(), cout_, oh, ow, kK, kStride, kPad, in_h_, in_w_);

  EMap(w.grad.data(), cin_, rows).noalias() +=
      ECMap(x_.data(), cin_, n) * ECMap(cols.data(), rows, n).transpose();
  for (int64_t c = 0; c < cout_; ++c) {
    const double* row = gy.data() + c * oh * ow;
    double s = 0.0;
    for (int64_t i = 0; i < oh * ow; ++i) s += row[i];
    b.grad[c] += s;
  }

  Tensor gx({cin_, in_h_, in_w_});
  EMap(gx.data(), cin_, n).noalias() = ECMap(w.value.data(), cin_, rows) * ECMap(cols.data(), rows, n);
  return gx;
}

void ConvTranspose2d::params(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

// ----------------------------------------------------------------- Dense

Dense::Dense(std::string name, int64_t in, int64_t out, Rng& rng, bool zero_init)
    : w(name + ".weight", {out, in}), b(name + ".bias", {out}), in_(in), out_(out) {
  if (!zero_init) init_uniform(w.value, in, rng);
}

Tensor Dense::forward(const Tensor& x, bool train) {
  if (x.numel() != in_) throw std::invalid_argument("Dense: bad input " + x.shape_str());
  Tensor y({out_});
  EMap(y.data(), out_, 1).noalias() = ECMap(w.value.data(), out_, in_) * ECMap(x.data(), in_, 1);
  for (int64_t i = 0; i < out_; ++i) y[i] += b.value[i];
  if (train) x_ = x;
  return y;
}

Tensor Dense::backward(const Tensor& gy) {
  EMap(w.grad.data(), out_, in_).noalias() += ECMap(gy.data(), out_, 1) * ECMap(x_.data(), in_, 1).transpose();
  for (int64_t i = 0; i < out_; ++i) b.grad[i] += gy[i];
  Tensor gx({in_});
  EMap(gx.data(), in_, 1).noalias() = ECMap(w.value.data(), out_, in_).transpose() * ECMap(gy.data(), out_, 1);
  return gx;
}

void Dense::params(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

// ------------------------------------------------------------- GroupNorm

GroupNorm::GroupNorm(std::string name, int64_t channels, int64_t groups, double eps)
    : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}), channels_(channels), groups_(groups),
      eps_(eps) {
  if (channels % groups != 0) throw std::invalid_argument("GroupNorm: channels must be divisible by groups");
  gamma.value.fill(1.0);
}

Tensor GroupNorm::forward(const Tensor& x, bool train) {
  if (x.ndim() != 3 || x.dim(0) != channels_) throw std::invalid_argument("GroupNorm: bad input " + x.shape_str());
  const int64_t h = x.dim(1), w = x.dim(2), cg = channels_ / groups_, gn = cg * h * w;
  Tensor xhat(x.shape());
  invstd_.assign(groups_, 0.0);
  for (int64_t g = 0; g < groups_; ++g) {
    const double* src = x.data() + g * gn;
    double mean = 0.0;
    for (int64_t i = 0; i < gn; ++i) mean += src[i];
    mean /= gn;
    double var = 0.0;
    for (int64_t i = 0; i < gn; ++i) {
      const double d = src[i] - mean;
      var += d * d;
    }
    var /= gn;
    const double is = 1.0 / std::sqrt(var + eps_);
    invstd_[g] = is;
    double* dst = xhat.data() + g * gn;
    for (int64_t i = 0; i < gn; ++i) dst[i] = (src[i] - mean) * is;
  }
  Tensor y(x.shape());
  for (int64_t c = 0; c < channels_; ++c) {
    const double* xh = xhat.data() + c * h * w;
    double* dst = y.data() + c * h * w;
    const double gm = gamma.value[c], bt = beta.value[c];
    for (int64_t i = 0; i < h * w; ++i) dst[i] = gm * xh[i] + bt;
  }
  if (train) xhat_ = std::move(xhat);
  return y;
}

Tensor GroupNorm::backward(const Tensor& gy) {
  const int64_t h = gy.dim(1), w = gy.dim(2), cg = channels_ / groups_, gn = cg * h * w;
  // d(gamma), d(beta)
  for (int64_t c = 0; c < channels_; ++c) {
    const double* g = gy.data() + c * h * w;
    const double* xh = xhat_.data() + c * h * w;
    double sg = 0.0, sb = 0.0;
    for (int64_t i = 0; i < h * w; ++i) {
      sg += g[i] * xh[i];
      sb += g[i];
    }
    gamma.grad[c] += sg;
    beta.grad[c] += sb;
  }
  // dx per group: is/N * (N*gh - sum(gh) - xhat*sum(gh*xhat)), gh = gy*gamma
  Tensor gx(gy.shape());
  std::vector<double> gh(gn);
  for (int64_t g = 0; g < groups_; ++g) {
    const double* gyp = gy.data() + g * gn;
    const double* xh = xhat_.data() + g * gn;
    double sum_gh = 0.0, sum_ghx = 0.0;
    for (int64_t i = 0; i < gn; ++i) {
      const int64_t c = g * cg + i / (h * w);
      gh[i] = gyp[i] * gamma.value[c];
      sum_gh += gh[i];
      sum_ghx += gh[i] * xh[i];
    }
    const double is = invstd_[g];
    double* dst = gx.data() + g * gn;
    for (int64_t i = 0; i < gn; ++i) dst[i] = is * (gh[i] - (sum_gh + xh[i] * sum_ghx) / gn);
  }
  return gx;
}

void GroupNorm::params(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ------------------------------------------------------------ activations

Tensor SiLU::forward(const Tensor& x, bool train) {
  Tensor y(x.shape());
  const double* xp = x.data();
  double* yp = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-xp[i]));
    yp[i] = xp[i] * s;
  }
  if (train) x_ = x;
  return y;
}

Tensor SiLU::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  const double* xp = x_.data();
  const double* gp = gy.data();
  double* dst = gx.data();
  for (int64_t i = 0; i < gy.numel(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-xp[i]));
    dst[i] = gp[i] * s * (1.0 + xp[i] * (1.0 - s));
  }
  return gx;
}

Tensor LeakyReLU::forward(const Tensor& x, bool train) {
  Tensor y(x.shape());
  const double* xp = x.data();
  double* yp = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) yp[i] = xp[i] >= 0.0 ? xp[i] : alpha_ * xp[i];
  if (train) x_ = x;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  const double* xp = x_.data();
  const double* gp = gy.data();
  double* dst = gx.data();
  for (int64_t i = 0; i < gy.numel(); ++i) dst[i] = xp[i] >= 0.0 ? gp[i] : alpha_ * gp[i];
  return gx;
}

// -------------------------------------------------------------- resampling

Tensor upsample_nearest2x(const Tensor& x) {
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor y({c, 2 * h, 2 * w});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t oy = 0; oy < 2 * h; ++oy) {
      const double* src = x.data() + (ch * h + oy / 2) * w;
      double* dst = y.data() + (ch * 2 * h + oy) * 2 * w;
      for (int64_t ox = 0; ox < 2 * w; ++ox) dst[ox] = src[ox / 2];
    }
  return y;
}

Tensor upsample_nearest2x_backward(const Tensor& gy) {
  const int64_t c = gy.dim(0), oh = gy.dim(1), ow = gy.dim(2), h = oh / 2, w = ow / 2;
  Tensor gx({c, h, w});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t oy = 0; oy < oh; ++oy) {
      const double* src = gy.data() + (ch * oh + oy) * ow;
      double* dst = gx.data() + (ch * h + oy / 2) * w;
      for (int64_t ox = 0; ox < ow; ++ox) dst[ox / 2] += src[ox];
    }
  return gx;
}

Tensor avg_pool2x(const Tensor& x) {
  const int64_t c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
  Tensor y({c, h, w});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t oy = 0; oy < h; ++oy)
      for (int64_t ox = 0; ox < w; ++ox) {
        const double* r0 = x.data() + (ch * 2 * h + 2 * oy) * 2 * w + 2 * ox;
        const double* r1 = r0 + 2 * w;
        y.at(ch, oy, ox) = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  return y;
}

Tensor avg_pool2x_backward(const Tensor& gy, int64_t in_h, int64_t in_w) {
  const int64_t c = gy.dim(0), h = gy.dim(1), w = gy.dim(2);
  Tensor gx({c, in_h, in_w});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t oy = 0; oy < h; ++oy)
      for (int64_t ox = 0; ox < w; ++ox) {
        const double g = 0.25 * gy.at(ch, oy, ox);
        double* r0 = gx.data() + (ch * in_h + 2 * oy) * in_w + 2 * ox;
        double* r1 = r0 + in_w;
        r0[0] += g;
        r0[1] += g;
        r1[0] += g;
        r1[1] += g;
      }
  return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw std::invalid_argument("concat_channels: spatial dims must match");
  }
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, int64_t ca) {
  if (x.ndim() != 3 || ca < 1 || ca >= x.dim(0)) throw std::invalid_argument("split_channels: bad split point");
  Tensor a({ca, x.dim(1), x.dim(2)});
  Tensor b({x.dim(0) - ca, x.dim(1), x.dim(2)});
  std::copy(x.data(), x.data() + a.numel(), a.data());
  std::copy(x.data() + a.numel(), x.data() + x.numel(), b.data());
  return {std::move(a), std::move(b)};
}

// --------------------------------------------------------- time embedding

Tensor time_embedding(double t, int64_t dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even and >= 2");
  const int64_t half = dim / 2;
  Tensor e({dim});
  for (int64_t i = 0; i < half; ++i) {
    const double freq = half > 1 ? std::exp(-std::log(10000.0) * static_cast<double>(i) / (half - 1)) : 1.0;
    e[i] = std::sin(t * freq);
    e[half + i] = std::cos(t * freq);
  }
  return e;
}

// ------------------------------------------------------------------ Adam

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    double* m = m_[i].data();
    double* v = v_[i].data();
    double* val = p.value.data();
    const double* g = p.grad.data();
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      val[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

std::vector<std::pair<std::string, const Tensor*>> Adam::state_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("m." + params_[i]->name, &m_[i]);
    out.emplace_back("v." + params_[i]->name, &v_[i]);
  }
  return out;
}

void Adam::load_state(const std::string& name, const Tensor& t) {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (name == "m." + params_[i]->name) {
      require_same_shape(m_[i], t);
      m_[i] = t;
      return;
    }
    if (name == "v." + params_[i]->name) {
      require_same_shape(v_[i], t);
      v_[i] = t;
      return;
    }
  }
  throw std::invalid_argument("Adam::load_state: unknown state tensor " + name);
}

}  // namespace ncdiff
