#pragma once

#include <span>
#include <vector>

namespace sggr {

/// Groups whose reward std falls below this get all-zero advantages.
inline constexpr double kDegenerateStd = 1e-8;
inline constexpr double kDefaultClipEpsilon = 3e-4;

struct PolicySample {
  double reward = 0;
  std::vector<double> logp_new;
  std::vector<double> logp_old;
};

struct PolicyGroup {
  std::vector<PolicySample> samples;
};

struct GspoResult {
  std::vector<double> advantages;
  std::vector<double> ratios;
  double objective = 0;
  std::vector<bool> clipped;
};

/// (r - mean) / population std. Throws Error(GroupTooSmall) for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards);

/// exp(mean(logp_new - logp_old)). Throws Error(LenMismatch) / Error(EmptySequence).
double sequence_ratio(std::span<const double> logp_new, std::span<const double> logp_old);

/// Mean over the group of min(s*A, clip(s, 1-eps, 1+eps)*A). Throws Error(InvalidConfig) for
/// epsilon outside (0,1), Error(InvalidInput) for log-probabilities that are positive or
/// non-finite, and propagates component errors.
GspoResult gspo_objective(const PolicyGroup& group, double epsilon = kDefaultClipEpsilon);

}  // namespace sggr
