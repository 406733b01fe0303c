#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sggr/codec.hpp"
#include "sggr/graph.hpp"

namespace sggr {

struct EvalConfig {
  double iou_threshold = 0.5;
  std::optional<std::size_t> top_k;  // unlimited when empty

  /// Throws Error(InvalidConfig).
  void validate() const;
};

struct PartitionSpec {
  std::vector<std::string> head;
  std::vector<std::string> body;
  std::vector<std::string> tail;

  /// "head", "body", "tail", or empty for a predicate outside the vocabulary.
  std::string group_of(const std::string& predicate) const;
};

/// A triplet with its endpoints resolved to classes and boxes.
struct ResolvedTriplet {
  std::string subject_class;
  BoundingBox subject_box;
  std::string predicate;
  std::string object_class;
  BoundingBox object_box;
};

/// Resolves every relation of the graph; relations with dangling endpoints are skipped.
std::vector<ResolvedTriplet> resolve_triplets(const SceneGraph& g);

bool triplet_correct(const ResolvedTriplet& gt, const ResolvedTriplet& pred, const EvalConfig& cfg);

struct HitCount {
  std::size_t gt = 0;
  std::size_t hit = 0;

  HitCount& operator+=(const HitCount& o) {
    gt += o.gt;
    hit += o.hit;
    return *this;
  }
  friend bool operator==(const HitCount&, const HitCount&) = default;
};

/// Per-scene tallies; merging is associative and commutative.
struct SceneTally {
  std::map<std::string, HitCount> per_predicate;
  HitCount zero_shot;
  std::map<std::string, HitCount> per_category;  // detection
  std::size_t scenes = 0;
  std::size_t failed_parses = 0;

  void merge(const SceneTally& other);
  friend bool operator==(const SceneTally&, const SceneTally&) = default;
};

/// Greedy one-to-one matching in prediction order: each prediction claims the first unclaimed
/// ground-truth triplet it is correct for. Objects are matched the same way for detection.
SceneTally evaluate_scene(const SceneGraph& gt, const SceneGraph& pred, const DatasetProfile& profile,
                          const EvalConfig& cfg);

struct EvalReport {
  double recall = 0;
  double m_recall = 0;
  double zs_recall = 0;
  std::map<std::string, double> per_predicate_recall;
  std::map<std::string, double> group_recall;
  double det_recall = 0;
  double det_m_recall = 0;
  double failure_rate = 0;
};

/// Throws Error(EmptyBatch) when no scene was tallied.
EvalReport aggregate(std::span<const SceneTally> tallies, const DatasetProfile& profile, const PartitionSpec& partition);

/// Frequency-sorted split into floor(0.3N) head, floor(0.3N) body and the rest as tail;
/// ties are broken by ascending token. Throws Error(VocabTooSmall) below 4 predicates.
PartitionSpec partition_predicates(const DatasetProfile& profile);

ordered_json eval_report_to_json(const EvalReport& r);

}  // namespace sggr
