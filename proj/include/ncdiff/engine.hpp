#pragma once

#include <cstdint>
#include <memory>

#include "ncdiff/codec.hpp"
#include "ncdiff/image.hpp"
#include "ncdiff/losses.hpp"
#include "ncdiff/nn.hpp"
#include "ncdiff/predictor.hpp"
#include "ncdiff/rng.hpp"
#include "ncdiff/schedule.hpp"

namespace ncdiff {

struct GuidanceConfig;  // guidance.hpp

/// I_t = I_0 + abar(t) * eps_n. Affine, no clamping, no randomness; t in
/// [0, T] so t = 0 returns I_0 and t = T returns the decoded image.
Image forward_sample(const Image& i0, const Image& eps_n, int64_t t, const NoiseSchedule& schedule);

/// I_0^theta = I_t - abar(t) * eps_hat, the denoised estimate implied by a
/// noise prediction at step t >= 1.
Image predict_x0(const Image& i_t, int64_t t, const Image& eps_hat, const NoiseSchedule& schedule);

/// One deterministic reverse update: I_{t_prev} = I_t - (abar(t) -
/// abar(t_prev)) * eps_hat. Requires t > t_prev >= 0. Affine in eps_hat, so
/// any plan telescopes: summing steps with a fixed eps_hat equals the
/// direct jump.
Image sampler_step(const Image& i_t, int64_t t, int64_t t_prev, const Image& eps_hat,
                   const NoiseSchedule& schedule);

/// Deterministic reverse trajectory: starts from the decoded image itself
/// (never from random noise), walks the plan with sampler_step, and clamps
/// to [-1, 1] only at the very end. The condition image handed to the
/// predictor is I_T and never changes along the way. With a guidance config
/// (enabled, lambda > 0) each step applies the embedding-gradient
/// correction; lambda = 0 or a null config is bitwise the plain sampler.
Image infer(const Image& i_term, const SamplingPlan& plan, NoisePredictor& predictor,
            const NoiseSchedule& schedule, const GuidanceConfig* guidance = nullptr,
            PerceptualEmbedder* embedder = nullptr);

struct TrainStepRecord {
  int64_t t = 0;
  LossBreakdown losses;
};

/// One training example materialized: everything the training step samples
/// before any gradients flow. I_T is constructed as I_0 + eps_n so the
/// residual identity holds exactly in floating point.
struct TrainSample {
  Image i0;      // signed
  Image eps_n;   // fresh residual draw, signed
  Image i_t;
  Image i_term;  // == i0 + eps_n
  int64_t t = 0;
};

/// Draws the per-step randomness: a fresh dithered reconstruction through
/// the frozen codec (the residual is resampled every call, never cached)
/// and a timestep uniform on {1..T}.
TrainSample draw_train_sample(const Image& i0_unit, CodecModel& codec, const NoiseSchedule& schedule,
                              Rng& rng);

/// Single-image training loop: draw t uniformly from {1..T}, rebuild eps_n
/// with a fresh dither draw, form I_t, predict, and take one optimizer step
/// on the combined loss. The codec stays frozen; only predictor parameters
/// move.
class DiffusionTrainer {
 public:
  DiffusionTrainer(UNetPredictor& predictor, CodecModel& codec, const NoiseSchedule& schedule,
                   const LossConfig& loss_cfg, PerceptualMetric* metric, double lr, uint64_t seed);

  /// One optimization step on a unit-range image. Throws if any loss
  /// component is non-finite (the message names the component).
  TrainStepRecord train_step(const Image& i0_unit);

  Adam& optimizer() { return adam_; }
  Rng& rng() { return rng_; }
  const LossConfig& loss_config() const { return loss_cfg_; }

 private:
  UNetPredictor& predictor_;
  CodecModel& codec_;
  const NoiseSchedule& schedule_;
  LossConfig loss_cfg_;
  PerceptualMetric* metric_;
  Adam adam_;
  Rng rng_;
};

}  // namespace ncdiff
