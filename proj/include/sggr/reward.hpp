#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sggr/assignment.hpp"
#include "sggr/cluster.hpp"
#include "sggr/embedding.hpp"
#include "sggr/graph.hpp"
#include "sggr/structured_io.hpp"

namespace sggr {

struct CompositeWeights {
  double format = 0.1;
  double category = 0.2;
  double node = 0.3;
  double relation = 0.4;
};

struct RewardConfig {
  double w_base = 1.0;
  double w_inc = 1.0;
  double tau = 0.75;  // prediction-to-prototype similarity threshold
  CompositeWeights weights;
  /// Share of the fine-grained reward in the relation component; the rest is coarse.
  double fine_share = 0.5;
  DbscanParams dbscan;
  MatchConfig match;

  /// Throws Error(InvalidConfig).
  void validate() const;
};

struct RewardBreakdown {
  double format = 0;
  double category = 0;
  double box = 0;
  double recall = 0;
  double fine = 0;
  double coarse = 0;
  double composite = 0;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

/// F1 between predicted and ground-truth category sets; 0 when precision + recall is 0.
double category_reward(const std::set<std::string>& pred, const std::set<std::string>& gt);

/// Per-pair grounding score: 1.0 when IoU > 0.5 and categories agree, 0.5 when exactly one holds.
double pair_recall(double iou_value, bool same_category);

struct NodeReward {
  double box = 0;
  double recall = 0;
};

/// Averages over all ground-truth objects; unmatched ones contribute 0.
NodeReward node_reward(const Matching& matching, std::span<const ObjectInstance> gt,
                       std::span<const ObjectInstance> pred, double width, double height);

/// w_base + w_inc * alpha(p), alpha the log-frequency position of p between the most (0) and
/// least (1) frequent predicate. Throws Error(UnknownPredicate).
double predicate_weight(std::string_view predicate, const DatasetProfile& profile, const RewardConfig& cfg);

/// Frequency-weighted mean of per-triplet similarities; predictions are candidates for a
/// ground-truth triplet when both endpoints are matched to its endpoints, and each prediction
/// is consumed at most once (greedy by descending similarity).
double fine_reward(const SceneGraph& gt, const SceneGraph& pred, const Matching& matching,
                   const DatasetProfile& profile, const RewardConfig& cfg, EmbeddingStore& store);

/// Prototype coverage times clamped density; no object matching involved.
double coarse_reward(const SceneGraph& gt, const SceneGraph& pred, const RewardConfig& cfg, EmbeddingStore& store);

/// Scores an already parsed completion against its ground truth.
RewardBreakdown score_parsed(const ParsedCompletion& parsed, const SceneGraph& gt, const DatasetProfile& profile,
                             const RewardConfig& cfg, EmbeddingStore& store);

RewardBreakdown composite_reward(std::string_view text, const SceneGraph& gt, const DatasetProfile& profile,
                                 const RewardConfig& cfg, EmbeddingStore& store);

struct ScoreItem {
  std::string_view text;
  const SceneGraph* gt = nullptr;  // null: unknown image
};

struct ScoreOutcome {
  std::optional<RewardBreakdown> breakdown;
  std::string error_code;  // empty on success
  std::string error_message;
};

/// Scores items independently, in parallel with OpenMP. Per-item failures become error
/// outcomes; the result is identical to score_batch_serial.
std::vector<ScoreOutcome> score_batch(std::span<const ScoreItem> items, const DatasetProfile& profile,
                                      const RewardConfig& cfg, EmbeddingStore& store, int threads = 0);
std::vector<ScoreOutcome> score_batch_serial(std::span<const ScoreItem> items, const DatasetProfile& profile,
                                             const RewardConfig& cfg, EmbeddingStore& store);

}  // namespace sggr
