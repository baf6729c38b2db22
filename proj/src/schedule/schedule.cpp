#include "ncdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace ncdiff {

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::kLinear;
  if (s == "uniform") return ScheduleKind::kUniform;
  throw std::invalid_argument("unknown schedule '" + s + "' (expected linear or uniform)");
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::kLinear ? "linear" : "uniform";
}

NoiseSchedule NoiseSchedule::build(ScheduleKind kind, int64_t T) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  NoiseSchedule s;
  s.kind_ = kind;
  s.T_ = T;
  s.alpha_.assign(T + 1, 0.0);
  s.alpha_bar_.assign(T + 1, 0.0);

  const double Td = static_cast<double>(T);
  for (int64_t t = 1; t <= T; ++t) {
    s.alpha_[t] = kind == ScheduleKind::kLinear ? 2.0 * static_cast<double>(t) / (Td * (Td + 1.0)) : 1.0 / Td;
  }

  // Kahan compensated cumulative sum: at T = 1000 the plain sum drifts past
  // the 1e-12 budget on abar(T) = 1.
  double sum = 0.0, comp = 0.0;
  for (int64_t t = 1; t <= T; ++t) {
    const double y = s.alpha_[t] - comp;
    const double u = sum + y;
    comp = (u - sum) - y;
    sum = u;
    s.alpha_bar_[t] = sum;
  }
  return s;
}

double NoiseSchedule::alpha(int64_t t) const {
  if (t < 1 || t > T_) throw std::out_of_range("alpha(t): t must be in [1, T]");
  return alpha_[t];
}

double NoiseSchedule::abar(int64_t t) const {
  if (t < 0 || t > T_) throw std::out_of_range("abar(t): t must be in [0, T]");
  return alpha_bar_[t];
}

SamplingPlan subsample(const NoiseSchedule& schedule, int64_t n_steps) {
  const int64_t T = schedule.T();
  if (n_steps < 1 || n_steps > T) throw std::invalid_argument("n_steps must be in [1, T]");
  SamplingPlan plan;
  plan.indices.reserve(n_steps + 1);
  const double stride = static_cast<double>(T) / static_cast<double>(n_steps);
  for (int64_t k = 0; k < n_steps; ++k) {
    int64_t idx = static_cast<int64_t>(std::llround(static_cast<double>(T) - static_cast<double>(k) * stride));
    if (idx < 1) idx = 1;
    if (plan.indices.empty() || idx < plan.indices.back()) plan.indices.push_back(idx);
  }
  plan.indices.push_back(0);
  return plan;
}

}  // namespace ncdiff
