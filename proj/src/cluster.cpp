#include "sggr/cluster.hpp"

#include <cmath>
#include <deque>

#include "sggr/error.hpp"

namespace sggr {

void DbscanParams::validate() const {
  if (!(eps > 0 && eps < 2)) throw Error(ErrorCode::InvalidConfig, "dbscan eps must lie in (0,2)");
  if (min_pts < 1) throw Error(ErrorCode::InvalidConfig, "dbscan min_pts must be >= 1");
}

namespace {

void fill_row(std::span<const EmbeddingVector> points, double eps, std::size_t i, std::vector<std::size_t>& row) {
  row.clear();
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (1.0 - cosine(points[i], points[j]) <= eps) row.push_back(j);
  }
}

}  // namespace

NeighborLists neighbor_lists(std::span<const EmbeddingVector> points, double eps) {
  NeighborLists out(points.size());
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) fill_row(points, eps, static_cast<std::size_t>(i), out[i]);
  return out;
}

NeighborLists neighbor_lists_serial(std::span<const EmbeddingVector> points, double eps) {
  NeighborLists out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) fill_row(points, eps, i, out[i]);
  return out;
}

std::vector<int> dbscan(std::span<const EmbeddingVector> points, const DbscanParams& params) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "dbscan needs at least one point");
  params.validate();
  const auto neighbors = neighbor_lists(points, params.eps);

  constexpr int kUnvisited = -2;
  std::vector<int> labels(points.size(), kUnvisited);
  int next_cluster = 0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (labels[p] != kUnvisited) continue;
    if (neighbors[p].size() < params.min_pts) {
      labels[p] = kNoise;
      continue;
    }
    const int cluster = next_cluster++;
    labels[p] = cluster;
    std::deque<std::size_t> seeds(neighbors[p].begin(), neighbors[p].end());
    while (!seeds.empty()) {
      const std::size_t q = seeds.front();
      seeds.pop_front();
      if (labels[q] == kNoise) labels[q] = cluster;
      if (labels[q] != kUnvisited) continue;
      labels[q] = cluster;
      if (neighbors[q].size() >= params.min_pts) seeds.insert(seeds.end(), neighbors[q].begin(), neighbors[q].end());
    }
  }
  return labels;
}

ClusterSet build_prototypes(std::span<const EmbeddingVector> points, const DbscanParams& params) {
  const auto labels = dbscan(points, params);

  // Cluster ids follow the smallest member index; noise points open their own cluster.
  ClusterSet out;
  out.assignment.assign(points.size(), 0);
  std::vector<std::optional<std::size_t>> remap;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::size_t id;
    if (labels[i] == kNoise) {
      id = out.clusters.size();
      out.clusters.emplace_back();
    } else {
      const auto raw = static_cast<std::size_t>(labels[i]);
      if (raw >= remap.size()) remap.resize(raw + 1);
      if (!remap[raw]) {
        remap[raw] = out.clusters.size();
        out.clusters.emplace_back();
      }
      id = *remap[raw];
    }
    out.assignment[i] = id;
    out.clusters[id].members.push_back(i);
  }

  for (auto& c : out.clusters) {
    if (c.members.size() == 1) {
      c.centroid = points[c.members.front()];
      continue;
    }
    std::vector<double> mean(points[c.members.front()].dim(), 0.0);
    for (std::size_t m : c.members) {
      const auto v = points[m].values();
      if (v.size() != mean.size()) throw Error(ErrorCode::DimMismatch, "cluster members differ in dimension");
      for (std::size_t k = 0; k < v.size(); ++k) mean[k] += v[k];
    }
    double sq = 0;
    for (double& x : mean) {
      x /= static_cast<double>(c.members.size());
      sq += x * x;
    }
    // Members that cancel out leave no direction; fall back to the first member.
    c.centroid = std::sqrt(sq) > 1e-12 ? EmbeddingVector(std::move(mean)) : points[c.members.front()];
  }
  return out;
}

std::optional<std::size_t> assign_prediction(const EmbeddingVector& pred, const ClusterSet& clusters, double tau) {
  std::optional<std::size_t> best;
  double best_sim = -1.0;
  for (std::size_t id = 0; id < clusters.clusters.size(); ++id) {
    const double s = reward_sim(pred, clusters.clusters[id].centroid);
    if (s > best_sim) {
      best_sim = s;
      best = id;
    }
  }
  if (!best || best_sim < tau) return std::nullopt;
  return best;
}

}  // namespace sggr
