#include "ncdiff/entropy_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ncdiff {

namespace {

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

constexpr double kLn2 = 0.6931471805599453;

}  // namespace

EntropyModel::EntropyModel(int64_t channels, int64_t support, double tail)
    : mu("entropy.mu", {channels}), s_raw("entropy.s_raw", {channels}), channels_(channels), L_(support), tail_(tail) {
  if (channels < 1 || support < 1) throw std::invalid_argument("EntropyModel: bad shape");
  // softplus(0.5413...) ~= 1: unit logistic scale at init
  s_raw.value.fill(0.54132485461292);
}

double EntropyModel::scale(int64_t c) const {
  const double x = s_raw.value[c];
  // softplus with overflow guard; floor keeps the density proper
  const double sp = x > 30.0 ? x : std::log1p(std::exp(x));
  return sp + 1e-6;
}

double EntropyModel::pmf(int64_t c, int64_t k) const {
  if (c < 0 || c >= channels_) throw std::out_of_range("EntropyModel::pmf channel");
  if (k < -L_ || k > L_) throw std::out_of_range("EntropyModel::pmf symbol outside support");
  const double m = mu.value[c], s = scale(c);
  const double hi = k == L_ ? 1.0 : sigmoid((static_cast<double>(k) + 0.5 - m) / s);
  const double lo = k == -L_ ? 0.0 : sigmoid((static_cast<double>(k) - 0.5 - m) / s);
  const double base = hi - lo;
  const double mix = 1.0 - static_cast<double>(num_symbols()) * tail_;
  return mix * base + tail_;
}

double EntropyModel::estimate_bits(const Tensor& q) const {
  if (q.ndim() != 3 || q.dim(0) != channels_) throw std::invalid_argument("estimate_bits: latent shape mismatch");
  const int64_t n = q.dim(1) * q.dim(2);
  double bits = 0.0;
  for (int64_t c = 0; c < channels_; ++c) {
    const double* p = q.data() + c * n;
    for (int64_t i = 0; i < n; ++i) {
      const int64_t k = static_cast<int64_t>(p[i]);
      bits -= std::log2(pmf(c, k));
    }
  }
  return bits;
}

double EntropyModel::rate_bits_backward(const Tensor& v, Tensor& gv) {
  if (v.ndim() != 3 || v.dim(0) != channels_) throw std::invalid_argument("rate_bits: latent shape mismatch");
  require_same_shape(v, gv, "rate_bits_backward");
  const int64_t n = v.dim(1) * v.dim(2);
  const double mix = 1.0 - static_cast<double>(num_symbols()) * tail_;
  double bits = 0.0;
  for (int64_t c = 0; c < channels_; ++c) {
    const double m = mu.value[c], s = scale(c);
    const double dsp = sigmoid(s_raw.value[c]);  // d softplus / d s_raw
    const double* vp = v.data() + c * n;
    double* gvp = gv.data() + c * n;
    double gmu = 0.0, gs = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double zh = (vp[i] + 0.5 - m) / s;
      const double zl = (vp[i] - 0.5 - m) / s;
      const double Fh = sigmoid(zh), Fl = sigmoid(zl);
      const double fh = Fh * (1.0 - Fh), fl = Fl * (1.0 - Fl);  // logistic pdf * s
      const double P = mix * (Fh - Fl) + tail_;
      bits -= std::log2(P);
      // d(-log2 P)/dx = -(1/(P ln2)) dP/dx
      const double coef = -mix / (P * kLn2);
      gvp[i] += coef * (fh - fl) / s;
      gmu += coef * -(fh - fl) / s;
      gs += coef * -(fh * zh - fl * zl) / s;
    }
    mu.grad[c] += gmu;
    s_raw.grad[c] += gs * dsp;
  }
  return bits;
}

double EntropyModel::rate_bits(const Tensor& v) const {
  if (v.ndim() != 3 || v.dim(0) != channels_) throw std::invalid_argument("rate_bits: latent shape mismatch");
  const int64_t n = v.dim(1) * v.dim(2);
  const double mix = 1.0 - static_cast<double>(num_symbols()) * tail_;
  double bits = 0.0;
  for (int64_t c = 0; c < channels_; ++c) {
    const double m = mu.value[c], s = scale(c);
    const double* vp = v.data() + c * n;
    for (int64_t i = 0; i < n; ++i) {
      const double Fh = sigmoid((vp[i] + 0.5 - m) / s);
      const double Fl = sigmoid((vp[i] - 0.5 - m) / s);
      bits -= std::log2(mix * (Fh - Fl) + tail_);
    }
  }
  return bits;
}

std::vector<uint32_t> EntropyModel::cdf(int64_t c) const {
  const int64_t ns = num_symbols();
  std::vector<double> p(ns);
  for (int64_t k = -L_; k <= L_; ++k) p[k + L_] = pmf(c, k);

  // Quantize to integer frequencies with floor 1, then repair the total by
  // adjusting the largest bins; all steps are deterministic.
  std::vector<uint32_t> freq(ns);
  int64_t sum = 0;
  for (int64_t i = 0; i < ns; ++i) {
    freq[i] = std::max<uint32_t>(1, static_cast<uint32_t>(std::llround(p[i] * kCdfTotal)));
    sum += freq[i];
  }
  int64_t diff = static_cast<int64_t>(kCdfTotal) - sum;
  while (diff != 0) {
    int64_t best = 0;
    for (int64_t i = 1; i < ns; ++i)
      if (freq[i] > freq[best]) best = i;
    if (diff > 0) {
      freq[best] += static_cast<uint32_t>(diff);
      diff = 0;
    } else {
      // shrink the largest bin, keeping at least 1
      const int64_t take = std::min<int64_t>(-diff, freq[best] - 1);
      freq[best] -= static_cast<uint32_t>(take);
      diff += take;
      if (take == 0) throw std::logic_error("cdf repair stuck");  // cannot happen: total 2^16 >> symbol count
    }
  }

  std::vector<uint32_t> cum(ns + 1, 0);
  for (int64_t i = 0; i < ns; ++i) cum[i + 1] = cum[i] + freq[i];
  return cum;
}

void EntropyModel::params(ParamList& out) {
  out.push_back(&mu);
  out.push_back(&s_raw);
}

}  // namespace ncdiff
