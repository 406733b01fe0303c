#pragma once

#include <span>
#include <string>
#include <vector>

#include "sggr/codec.hpp"
#include "sggr/embedding.hpp"
#include "sggr/graph.hpp"
#include "sggr/sgdet_eval.hpp"
#include "sggr/structured_io.hpp"

namespace sggr {

struct CandidateTriplet {
  std::string image_id;
  std::string subject;
  std::string predicate;
  std::string object;
  std::string provenance = "augmented";

  friend auto operator<=>(const CandidateTriplet&, const CandidateTriplet&) = default;
};

struct FilterConfig {
  double theta = 0.80;
  void validate() const;
};

struct CandidateCheck {
  bool ok = false;
  std::string reason;  // empty when ok
};

/// Structural checks: endpoints resolve in `gt`, predicate in the vocabulary, no self relation,
/// not already a ground-truth relation.
CandidateCheck validate_candidate(const CandidateTriplet& c, const SceneGraph& gt, const DatasetProfile& profile);

struct DropEntry {
  CandidateTriplet candidate;
  std::string reason;
  std::optional<double> max_similarity;
};

struct FilterResult {
  std::vector<CandidateTriplet> retained;  // sorted
  std::vector<DropEntry> dropped;          // sorted by candidate
};

/// Keeps candidates that pass validation and reach similarity >= theta with some ground-truth
/// triplet of the same image. Output is independent of input order.
FilterResult filter_candidates(std::span<const CandidateTriplet> candidates, const SceneGraph& gt,
                               const DatasetProfile& profile, const FilterConfig& cfg, EmbeddingStore& store);

/// gt plus the retained triplets (typed by the taxonomy).
SceneGraph merge_candidates(const SceneGraph& gt, std::span<const CandidateTriplet> retained,
                            const DatasetProfile& profile);

CotRecord build_sft_record(const SceneGraph& gt, std::span<const CandidateTriplet> retained,
                           const DatasetProfile& profile);

struct GroupStats {
  std::size_t count = 0;  // relation triplets
  std::size_t types = 0;  // distinct class-level triplets
  double share = 0;       // count / total relations
};

struct CorpusStats {
  std::size_t images = 0;
  std::size_t objects = 0;
  std::size_t relations = 0;
  std::size_t triplet_types = 0;
  double objects_per_image = 0;
  double relations_per_image = 0;
  std::map<std::string, GroupStats> groups;  // head / body / tail
};

/// Throws Error(EmptyBatch).
CorpusStats corpus_stats(std::span<const SceneGraph> graphs, const DatasetProfile& profile,
                         const PartitionSpec& partition);

ordered_json candidate_to_json(const CandidateTriplet& c);
CandidateTriplet candidate_from_json(const json& j);
ordered_json drop_entry_to_json(const DropEntry& d);
ordered_json corpus_stats_to_json(const CorpusStats& s);

}  // namespace sggr
