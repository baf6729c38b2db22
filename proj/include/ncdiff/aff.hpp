#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncdiff/nn.hpp"
#include "ncdiff/tensor.hpp"

namespace ncdiff {

/// Adaptive frequency filtering on skip connections: one learnable gain
/// gamma_k per skip level, applied to all Fourier bins at or above that
/// level's radius threshold. Thresholds decrease with depth because deep
/// features cover a narrower frequency range.
struct AFFConfig {
  double gamma_init = 0.0;                       // identity filter at init
  std::vector<double> r_th = {0.5, 0.4, 0.3, 0.25};  // shallow -> deep
};

/// Frequency-radius mask: 1 where r(u,v) < r_th, else 1 + gamma. Radius is
/// normalized so the Nyquist corner sits at sqrt(2); the comparison is
/// strict, so r_th = 0 boosts every bin including DC.
Tensor build_radial_mask(int64_t h, int64_t w, double r_th, double gamma);

/// One skip-level filter: s' = IFFT(mask (*) FFT(s)) per channel. Linear and
/// self-adjoint in s, differentiable in gamma. Bins below the threshold pass
/// through the mask multiplication bitwise unchanged.
class AFFLayer {
 public:
  AFFLayer(std::string name, double r_th, double gamma_init);
  Tensor forward(const Tensor& x, bool train = true);
  Tensor backward(const Tensor& gy);
  void params(ParamList& out);

  double r_th() const { return r_th_; }
  Param gamma;  // [1]

 private:
  double r_th_;
  Tensor hp_;  // cached high-pass component of the last training forward
};

}  // namespace ncdiff
