#pragma once

#include <cstdint>
#include <vector>

#include "ncdiff/tensor.hpp"

namespace ncdiff {

/// Multilevel orthonormal Haar decomposition. Level i (0-based) holds the
/// three detail subbands at resolution /2^(i+1); LL is the coarsest
/// approximation. Inputs whose dims are not divisible by 2^K are
/// reflect-padded first; orig_h/orig_w remember the crop for the inverse.
struct WaveletPyramid {
  struct Level {
    Tensor H, V, D;  // horizontal, vertical, diagonal detail
  };
  std::vector<Level> levels;
  Tensor LL;
  int64_t orig_h = 0, orig_w = 0;

  int64_t K() const { return static_cast<int64_t>(levels.size()); }
};

WaveletPyramid dwt_multilevel(const Tensor& x, int64_t K);
Tensor idwt_multilevel(const WaveletPyramid& p);

/// Sum over levels of per-subband mean squared differences of the three
/// detail bands (the approximation band is excluded by construction).
double high_freq_loss(const Tensor& a, const Tensor& b, int64_t K);

/// Same value; also accumulates scale * d(loss)/d(a) into ga and
/// scale * d(loss)/d(b) into gb (either may be null to skip).
double high_freq_loss_backward(const Tensor& a, const Tensor& b, int64_t K, Tensor* ga, Tensor* gb, double scale);

}  // namespace ncdiff
