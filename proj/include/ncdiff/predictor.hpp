#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include "ncdiff/aff.hpp"
#include "ncdiff/image.hpp"
#include "ncdiff/nn.hpp"

namespace ncdiff {

/// Conditional U-Net shape. Four downsampling stages of two residual blocks
/// (stride-2 conv between stages, none after the last), self-attention after
/// every residual block of one chosen stage, and a mirrored upsampling path
/// of three residual blocks per stage. Skip connections pass through one
/// AFF filter per level.
struct PredictorConfig {
  int64_t in_channels = 1;   // channels of each conditioning image; the net sees 2x
  int64_t base_channels = 16;
  std::array<int64_t, 4> stage_multipliers = {1, 2, 2, 2};
  int64_t attention_stage = 1;  // 0-based stage index; -1 disables attention
  int64_t time_embed_dim = 64;
  AFFConfig aff;
};

/// Noise estimator interface: the sampler and the engine depend on this so
/// tests can substitute analytic predictors for the learned one.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  /// eps_hat(I_t, t, I_T); all images signed-range and same shape.
  virtual Image predict(const Image& i_t, double t, const Image& i_term) = 0;
  virtual int64_t channels() const = 0;
};

class UNetPredictor : public NoisePredictor {
 public:
  UNetPredictor(const PredictorConfig& cfg, uint64_t seed);
  ~UNetPredictor() override;

  /// Inference path: no activation caches, deterministic.
  Image predict(const Image& i_t, double t, const Image& i_term) override;
  int64_t channels() const override;

  /// Training path: caches activations; backward accumulates parameter
  /// gradients and returns d(loss)/d(i_t).
  Tensor forward_train(const Tensor& i_t, double t, const Tensor& i_term);
  Tensor backward(const Tensor& geps);

  ParamList params();
  const PredictorConfig& config() const;
  int64_t count_parameters();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Parameter census for a hypothetical construction (weights are seeded and
/// discarded; the count depends only on the config).
int64_t count_parameters(const PredictorConfig& cfg);

}  // namespace ncdiff
