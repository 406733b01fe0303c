#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "sggr/embedding.hpp"
#include "sggr/graph.hpp"

namespace sggr {

/// Weights of the object matching cost: semantic, overlap, coordinate proximity.
struct MatchConfig {
  double lambda_semantic = 1.0;
  double lambda_iou = 1.0;
  double lambda_l1 = 1.0;
  /// Pairs with cost strictly above this are dropped after the optimal assignment.
  double cost_threshold = 1.5;

  /// Throws Error(InvalidConfig).
  void validate() const;
};

/// Row-major gt x pred matrix.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> cells;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), cells(r * c, fill) {}
  double& at(std::size_t r, std::size_t c) { return cells[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
};

struct Matching {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (gt_index, pred_index), sorted by gt_index
  std::vector<std::size_t> unmatched_gt;
  std::vector<std::size_t> unmatched_pred;

  /// pred index matched to the gt index, if any.
  std::optional<std::size_t> pred_for(std::size_t gt_index) const;
};

double iou(const BoundingBox& a, const BoundingBox& b);

/// L1 distance over corner coordinates with x divided by width and y by height.
double l1_norm(const BoundingBox& a, const BoundingBox& b, double width, double height);

double match_cost(const ObjectInstance& gt, const ObjectInstance& pred, const MatchConfig& cfg, EmbeddingStore& store,
                  double width, double height);

/// Full gt x pred cost matrix. Category embeddings are resolved once per distinct token.
CostMatrix build_cost_matrix(std::span<const ObjectInstance> gt, std::span<const ObjectInstance> pred,
                             const MatchConfig& cfg, EmbeddingStore& store, double width, double height);

/// Minimum-cost assignment of min(rows, cols) pairs (rectangular Hungarian). Returned pairs are
/// sorted by row. Deterministic: candidate columns are scanned in index order and ties keep the
/// first minimum found.
std::vector<std::pair<std::size_t, std::size_t>> solve_assignment(const CostMatrix& cost);

/// Optimal assignment over the full cost matrix followed by cost-threshold filtering.
Matching solve_matching(std::span<const ObjectInstance> gt, std::span<const ObjectInstance> pred,
                        const MatchConfig& cfg, EmbeddingStore& store, double width, double height);

/// Same filtering step on a precomputed matrix.
Matching matching_from_costs(const CostMatrix& cost, double cost_threshold);

}  // namespace sggr
