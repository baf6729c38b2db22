#pragma once

#include <cstdint>
#include <vector>

#include "ncdiff/nn.hpp"
#include "ncdiff/tensor.hpp"

namespace ncdiff {

/// Fully factorized per-channel entropy model over the bounded integer
/// support [-L, L]. Each channel has a logistic density with learnable
/// location mu and scale softplus(s_raw); symbol probabilities are the
/// density's mass on [k-0.5, k+0.5), with everything beyond +-L folded
/// into the end bins and a uniform tail mix keeping every symbol's
/// probability at least `tail`.
class EntropyModel {
 public:
  EntropyModel(int64_t channels, int64_t support = 64, double tail = 1e-9);

  int64_t channels() const { return channels_; }
  int64_t support() const { return L_; }
  int64_t num_symbols() const { return 2 * L_ + 1; }

  /// Discrete probability of integer symbol k in channel c; >= tail.
  double pmf(int64_t c, int64_t k) const;

  /// Expected code length of a quantized latent in bits: -sum log2 pmf.
  double estimate_bits(const Tensor& q) const;

  /// Differentiable rate of a continuous (noise-relaxed) latent in bits.
  /// Accumulates d(rate)/d(mu), d(rate)/d(s_raw) into the param grads and
  /// adds d(rate)/d(v) into gv (same shape as v).
  double rate_bits_backward(const Tensor& v, Tensor& gv);
  double rate_bits(const Tensor& v) const;

  /// Integer cumulative-frequency table for channel c: size 2L+2, cum[0]=0,
  /// cum[2L+1] = 2^16, every symbol's width >= 1. Deterministic.
  std::vector<uint32_t> cdf(int64_t c) const;
  static constexpr uint32_t kCdfTotal = 1u << 16;

  void params(ParamList& out);

  Param mu;     // [C]
  Param s_raw;  // [C]; scale = softplus(s_raw)

 private:
  double scale(int64_t c) const;

  int64_t channels_, L_;
  double tail_;
};

}  // namespace ncdiff
