#include "sggr/gspo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sggr/error.hpp"

namespace sggr {

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error(ErrorCode::GroupTooSmall, "group has " + std::to_string(rewards.size()) + " samples");
  const auto n = static_cast<double>(rewards.size());
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);

  std::vector<double> out(rewards.size(), 0.0);
  if (!(std_dev >= kDegenerateStd)) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / std_dev;
  return out;
}

double sequence_ratio(std::span<const double> logp_new, std::span<const double> logp_old) {
  if (logp_new.size() != logp_old.size()) {
    throw Error(ErrorCode::LenMismatch,
                std::to_string(logp_new.size()) + " new vs " + std::to_string(logp_old.size()) + " old tokens");
  }
  if (logp_new.empty()) throw Error(ErrorCode::EmptySequence, "sequence has no tokens");
  double sum = 0;
  for (std::size_t t = 0; t < logp_new.size(); ++t) sum += logp_new[t] - logp_old[t];
  return std::exp(sum / static_cast<double>(logp_new.size()));
}

GspoResult gspo_objective(const PolicyGroup& group, double epsilon) {
  if (!(epsilon > 0 && epsilon < 1)) throw Error(ErrorCode::InvalidConfig, "clip epsilon must lie in (0,1)");
  for (const auto& s : group.samples) {
    for (const auto* seq : {&s.logp_new, &s.logp_old}) {
      if (std::any_of(seq->begin(), seq->end(), [](double lp) { return !std::isfinite(lp) || lp > 0; })) {
        throw Error(ErrorCode::InvalidInput, "log-probabilities must be finite and <= 0");
      }
    }
  }

  std::vector<double> rewards;
  rewards.reserve(group.samples.size());
  for (const auto& s : group.samples) rewards.push_back(s.reward);

  GspoResult out;
  out.advantages = group_advantages(rewards);
  double total = 0;
  for (std::size_t i = 0; i < group.samples.size(); ++i) {
    const auto& s = group.samples[i];
    const double ratio = sequence_ratio(s.logp_new, s.logp_old);
    const double adv = out.advantages[i];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv;
    out.ratios.push_back(ratio);
    out.clipped.push_back(clipped < unclipped);
    total += std::min(unclipped, clipped);
  }
  out.objective = total / static_cast<double>(group.samples.size());

  // A common in-band ratio factors out of a zero-mean advantage sum.
  const bool common_ratio = std::all_of(out.ratios.begin(), out.ratios.end(), [&](double r) { return r == out.ratios[0]; });
  if (common_ratio && out.ratios[0] >= 1.0 - epsilon && out.ratios[0] <= 1.0 + epsilon) out.objective = 0.0;
  return out;
}

}  // namespace sggr
