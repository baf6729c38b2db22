#include "ncdiff/engine.hpp"

#include <stdexcept>
#include <string>
#include <utility>

#include "ncdiff/guidance.hpp"

namespace ncdiff {

namespace {

void check_pair(const Image& a, const Image& b, const char* what) {
  require_same_shape(a.data, b.data, what);
  if (a.range != Range::kSigned || b.range != Range::kSigned)
    throw std::invalid_argument(std::string(what) + ": diffusion images must be signed-range");
}

void check_t(int64_t t, int64_t T, const char* what) {
  if (t < 0 || t > T)
    throw std::invalid_argument(std::string(what) + ": t = " + std::to_string(t) +
                                " outside [0, " + std::to_string(T) + "]");
}

/// Placeholder metric for trainers running with omega = 0: the loss module
/// never evaluates the metric then, but its interface wants a live object.
class ZeroMetric final : public PerceptualMetric {
 public:
  std::string descriptor() const override { return "zero"; }
  double distance(const Image&, const Image&) override { return 0.0; }
  double distance_backward(const Image&, const Image&, Tensor&, double) override { return 0.0; }
};

ZeroMetric g_zero_metric;

}  // namespace

Image forward_sample(const Image& i0, const Image& eps_n, int64_t t, const NoiseSchedule& schedule) {
  check_pair(i0, eps_n, "forward_sample");
  check_t(t, schedule.T(), "forward_sample");
  Tensor out = i0.data;
  out.add_scaled_(eps_n.data, schedule.abar(t));
  return Image(std::move(out), Range::kSigned);
}

Image predict_x0(const Image& i_t, int64_t t, const Image& eps_hat, const NoiseSchedule& schedule) {
  check_pair(i_t, eps_hat, "predict_x0");
  check_t(t, schedule.T(), "predict_x0");
  if (t < 1) throw std::invalid_argument("predict_x0: t must be >= 1");
  Tensor out = i_t.data;
  out.add_scaled_(eps_hat.data, -schedule.abar(t));
  return Image(std::move(out), Range::kSigned);
}

Image sampler_step(const Image& i_t, int64_t t, int64_t t_prev, const Image& eps_hat,
                   const NoiseSchedule& schedule) {
  check_pair(i_t, eps_hat, "sampler_step");
  check_t(t, schedule.T(), "sampler_step");
  if (t_prev < 0 || t_prev >= t)
    throw std::invalid_argument("sampler_step: needs t > t_prev >= 0, got t = " + std::to_string(t) +
                                ", t_prev = " + std::to_string(t_prev));
  Tensor out = i_t.data;
  out.add_scaled_(eps_hat.data, -(schedule.abar(t) - schedule.abar(t_prev)));
  return Image(std::move(out), Range::kSigned);
}

Image infer(const Image& i_term, const SamplingPlan& plan, NoisePredictor& predictor,
            const NoiseSchedule& schedule, const GuidanceConfig* guidance,
            PerceptualEmbedder* embedder) {
  if (plan.indices.size() < 2 || plan.indices.front() != schedule.T() || plan.indices.back() != 0)
    throw std::invalid_argument("infer: plan must run from T down to 0");
  for (size_t k = 0; k + 1 < plan.indices.size(); ++k)
    if (plan.indices[k] <= plan.indices[k + 1])
      throw std::invalid_argument("infer: plan indices must be strictly decreasing");
  const bool guided = guidance != nullptr && guidance->enabled && guidance->lambda != 0.0;
  if (guided && embedder == nullptr)
    throw std::invalid_argument("infer: guidance enabled but no embedder given");

  const Image cond = to_signed(i_term);  // fixed condition for the whole trajectory
  Image x = cond;
  for (size_t k = 0; k + 1 < plan.indices.size(); ++k) {
    const int64_t t = plan.indices[k], t_prev = plan.indices[k + 1];
    const Image eps_hat = predictor.predict(x, static_cast<double>(t), cond);
    x = guided ? guided_sampler_step(x, t, t_prev, eps_hat, schedule, *guidance, *embedder, cond)
               : sampler_step(x, t, t_prev, eps_hat, schedule);
  }
  x.data.clamp_(-1.0, 1.0);  // trajectory itself is never clamped
  return x;
}

DiffusionTrainer::DiffusionTrainer(UNetPredictor& predictor, CodecModel& codec,
                                   const NoiseSchedule& schedule, const LossConfig& loss_cfg,
                                   PerceptualMetric* metric, double lr, uint64_t seed)
    : predictor_(predictor),
      codec_(codec),
      schedule_(schedule),
      loss_cfg_(loss_cfg),
      metric_(metric),
      adam_(predictor.params(), lr),
      rng_(seed) {
  if (loss_cfg_.omega != 0.0 && metric_ == nullptr)
    throw std::invalid_argument("DiffusionTrainer: perceptual weight is nonzero but no metric given");
}

TrainSample draw_train_sample(const Image& i0_unit, CodecModel& codec, const NoiseSchedule& schedule,
                              Rng& rng) {
  if (i0_unit.range != Range::kUnit)
    throw std::invalid_argument("draw_train_sample: expects a unit-range image straight from the dataset");
  TrainSample s;
  // Fresh dither draw each call: the residual is a new sample from the
  // quantizer's noise distribution, not a cached constant per image.
  const Image rec = codec.reconstruct(i0_unit, QuantizerMode::kTrainUniform, &rng);
  s.i0 = to_signed(i0_unit);
  s.eps_n = residual_from_pair(i0_unit, rec);
  s.t = rng.uniform_int(1, schedule.T());
  s.i_t = forward_sample(s.i0, s.eps_n, s.t, schedule);
  s.i_term = forward_sample(s.i0, s.eps_n, schedule.T(), schedule);
  return s;
}

TrainStepRecord DiffusionTrainer::train_step(const Image& i0_unit) {
  const TrainSample s = draw_train_sample(i0_unit, codec_, schedule_, rng_);
  const double abar = schedule_.abar(s.t);

  const Tensor eps_hat = predictor_.forward_train(s.i_t.data, static_cast<double>(s.t), s.i_term.data);
  Tensor x0 = s.i_t.data;
  x0.add_scaled_(eps_hat, -abar);
  const Image i0_theta(std::move(x0), Range::kSigned);

  Tensor geps(eps_hat.shape());
  Tensor gx0(eps_hat.shape());
  PerceptualMetric& metric = metric_ != nullptr ? *metric_ : g_zero_metric;
  TrainStepRecord rec_out;
  rec_out.t = s.t;
  rec_out.losses =
      total_loss_backward(eps_hat, s.eps_n.data, s.i0, i0_theta, loss_cfg_, metric, &geps, &gx0);

  // I_0^theta = I_t - abar * eps_hat, so d(loss)/d(eps_hat) picks up the
  // image-side gradient scaled by -abar.
  geps.add_scaled_(gx0, -abar);
  for (Param* p : predictor_.params()) p->grad.fill(0.0);
  predictor_.backward(geps);
  adam_.step();
  return rec_out;
}

}  // namespace ncdiff
