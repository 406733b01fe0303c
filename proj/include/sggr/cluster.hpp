#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sggr/embedding.hpp"

namespace sggr {

struct DbscanParams {
  double eps = 0.15;  // cosine-distance radius, inclusive
  std::size_t min_pts = 2;  // neighbours within eps, counting the point itself

  /// Throws Error(InvalidConfig) unless eps in (0,2) and min_pts >= 1.
  void validate() const;
};

inline constexpr int kNoise = -1;

using NeighborLists = std::vector<std::vector<std::size_t>>;

/// For every point, the ascending indices of points with 1 - cosine <= eps (self included).
/// OpenMP-parallel over points.
NeighborLists neighbor_lists(std::span<const EmbeddingVector> points, double eps);
/// Serial twin of neighbor_lists; identical output.
NeighborLists neighbor_lists_serial(std::span<const EmbeddingVector> points, double eps);

/// Cluster id (0-based, in discovery order) or kNoise for each point. Border points belong
/// to the first cluster that reaches them when scanning seeds in index order.
/// Throws Error(EmptyInput).
std::vector<int> dbscan(std::span<const EmbeddingVector> points, const DbscanParams& params);

struct Cluster {
  std::vector<std::size_t> members;  // ascending
  EmbeddingVector centroid;
};

struct ClusterSet {
  /// Ordered by smallest member index.
  std::vector<Cluster> clusters;
  /// Input index -> cluster id.
  std::vector<std::size_t> assignment;
};

/// DBSCAN with every noise point promoted to a singleton cluster; centroids are the
/// re-normalized member means. Throws Error(EmptyInput).
ClusterSet build_prototypes(std::span<const EmbeddingVector> points, const DbscanParams& params);

/// Cluster whose centroid is most similar to `pred` (reward_sim), if that similarity >= tau.
/// Ties go to the lowest cluster id.
std::optional<std::size_t> assign_prediction(const EmbeddingVector& pred, const ClusterSet& clusters, double tau);

}  // namespace sggr
