#include "ncdiff/guidance.hpp"

#include <exception>
#include <stdexcept>
#include <string>

#include "ncdiff/log.hpp"

namespace ncdiff {

double clip_loss(const Image& i0_theta, const Image& i_term, PerceptualEmbedder& embedder) {
  const Tensor e_pred = embedder.embed(i0_theta);
  const Tensor e_ref = embedder.embed(i_term);
  return mse(e_pred, e_ref);
}

Image guided_sampler_step(const Image& i_t, int64_t t, int64_t t_prev, const Image& eps_hat,
                          const NoiseSchedule& schedule, const GuidanceConfig& config,
                          PerceptualEmbedder& embedder, const Image& i_term) {
  if (config.lambda < 0.0)
    throw std::invalid_argument("guided_sampler_step: lambda must be >= 0");
  // Zero strength leaves no trace: skip all embedding work so the result is
  // bit-for-bit the plain sampler update.
  if (!config.enabled || config.lambda == 0.0)
    return sampler_step(i_t, t, t_prev, eps_hat, schedule);

  Image base = sampler_step(i_t, t, t_prev, eps_hat, schedule);
  const Image i0_theta = predict_x0(i_t, t, eps_hat, schedule);
  Tensor grad;
  try {
    const Tensor e_ref = embedder.embed(i_term);
    const Tensor e_pred = embedder.embed(i0_theta);  // last embed: cache belongs to the prediction
    Tensor ge = sub(e_pred, e_ref);
    ge.scale_(2.0 / static_cast<double>(ge.numel()));  // d/d e_pred of mean squared distance
    grad = embedder.embed_backward(ge);
  } catch (const std::exception& e) {
    log_warn("guidance: embedder failed (" + std::string(e.what()) + "); step runs unguided");
    return base;
  }
  base.data.add_scaled_(grad, -config.lambda);
  return base;
}

}  // namespace ncdiff
