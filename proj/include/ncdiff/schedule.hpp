#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ncdiff {

enum class ScheduleKind {
  kLinear,   // increments grow linearly in t, normalized to sum 1
  kUniform,  // constant increments 1/T
};

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

/// Variance schedule for the constrained-noise forward process. The
/// cumulative coefficient abar runs from abar(0) = 0 (clean image) to
/// abar(T) = 1 (full residual noise); increments are all positive so abar
/// is strictly increasing.
class NoiseSchedule {
 public:
  static NoiseSchedule build(ScheduleKind kind, int64_t T);

  int64_t T() const { return T_; }
  ScheduleKind kind() const { return kind_; }

  /// alpha(t), valid for t in [1, T].
  double alpha(int64_t t) const;
  /// abar(t), valid for t in [0, T]; abar(0) == 0.
  double abar(int64_t t) const;

 private:
  NoiseSchedule() = default;
  ScheduleKind kind_ = ScheduleKind::kLinear;
  int64_t T_ = 0;
  std::vector<double> alpha_;      // [T+1], index 0 unused
  std::vector<double> alpha_bar_;  // [T+1], index 0 = 0
};

/// Descending timestep sequence for (accelerated) sampling. `indices`
/// starts at T and ends at the terminal 0, so consecutive pairs
/// (indices[k], indices[k+1]) are exactly the sampler's (high, low) steps.
struct SamplingPlan {
  std::vector<int64_t> indices;

  int64_t steps() const { return static_cast<int64_t>(indices.size()) - 1; }
};

/// Uniformly spaced plan with n_steps steps: indices round(T - k*T/n) for
/// k = 0..n-1 (deduplicated, strictly decreasing) plus the terminal 0.
SamplingPlan subsample(const NoiseSchedule& schedule, int64_t n_steps);

}  // namespace ncdiff
