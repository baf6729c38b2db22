#pragma once

#include <cstdint>

#include "ncdiff/engine.hpp"
#include "ncdiff/image.hpp"
#include "ncdiff/perceptual.hpp"
#include "ncdiff/schedule.hpp"

namespace ncdiff {

/// Strength of the zero-shot enhancement correction. lambda scales the raw
/// embedding-distance gradient; it is applied unscaled by the step size, on
/// every step including the final one. A practical sweep doubles lambda
/// from 1e-3 until artifacts appear and keeps the last clean value; 1e-2 is
/// a sane default for the bundled embedder.
struct GuidanceConfig {
  double lambda = 1e-2;
  bool enabled = false;
};

/// Mean-reduced squared embedding distance |e(a) - e(b)|^2 / d. Symmetric,
/// zero iff the embeddings coincide.
double clip_loss(const Image& i0_theta, const Image& i_term, PerceptualEmbedder& embedder);

/// One guided reverse update: the plain sampler step minus lambda times the
/// gradient of clip_loss(I_0^theta, I_T) with respect to I_0^theta, where
/// I_0^theta = predict_x0(I_t, t, eps_hat). The gradient flows through the
/// embedder only; predictor weights are untouched. lambda = 0 (or disabled)
/// short-circuits to sampler_step before any embedding work, so the result
/// is bitwise identical to the unguided step. If the embedder throws, the
/// step falls back to the unguided update and logs a warning.
Image guided_sampler_step(const Image& i_t, int64_t t, int64_t t_prev, const Image& eps_hat,
                          const NoiseSchedule& schedule, const GuidanceConfig& config,
                          PerceptualEmbedder& embedder, const Image& i_term);

}  // namespace ncdiff
