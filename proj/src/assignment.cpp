#include "sggr/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sggr/error.hpp"

namespace sggr {

void MatchConfig::validate() const {
  for (double v : {lambda_semantic, lambda_iou, lambda_l1, cost_threshold}) {
    if (!std::isfinite(v) || v < 0) throw Error(ErrorCode::InvalidConfig, "match weights and threshold must be >= 0");
  }
  if (lambda_semantic + lambda_iou + lambda_l1 <= 0) {
    throw Error(ErrorCode::InvalidConfig, "at least one match weight must be positive");
  }
}

std::optional<std::size_t> Matching::pred_for(std::size_t gt_index) const {
  auto it = std::lower_bound(pairs.begin(), pairs.end(), gt_index,
                             [](const auto& p, std::size_t g) { return p.first < g; });
  if (it == pairs.end() || it->first != gt_index) return std::nullopt;
  return it->second;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double l1_norm(const BoundingBox& a, const BoundingBox& b, double width, double height) {
  return std::abs(a.x1 - b.x1) / width + std::abs(a.y1 - b.y1) / height + std::abs(a.x2 - b.x2) / width +
         std::abs(a.y2 - b.y2) / height;
}

namespace {

double cost_from_terms(const MatchConfig& cfg, double sim, const BoundingBox& a, const BoundingBox& b, double width,
                       double height) {
  return cfg.lambda_semantic * (1.0 - sim) + cfg.lambda_iou * (1.0 - iou(a, b)) +
         cfg.lambda_l1 * l1_norm(a, b, width, height);
}

}  // namespace

double match_cost(const ObjectInstance& gt, const ObjectInstance& pred, const MatchConfig& cfg, EmbeddingStore& store,
                  double width, double height) {
  const double sim = reward_sim(store.embed(canonical_token(gt.category)), store.embed(canonical_token(pred.category)));
  return cost_from_terms(cfg, sim, gt.box, pred.box, width, height);
}

CostMatrix build_cost_matrix(std::span<const ObjectInstance> gt, std::span<const ObjectInstance> pred,
                             const MatchConfig& cfg, EmbeddingStore& store, double width, double height) {
  CostMatrix cost(gt.size(), pred.size());
  if (gt.empty() || pred.empty()) return cost;

  std::map<std::string, EmbeddingVector> emb;
  std::vector<std::string> keys;
  for (auto side : {gt, pred}) {
    for (const auto& o : side) {
      auto k = canonical_token(o.category);
      if (emb.try_emplace(k).second) keys.push_back(std::move(k));
    }
  }
  auto vectors = store.embed_many(keys);
  for (std::size_t i = 0; i < keys.size(); ++i) emb[keys[i]] = std::move(vectors[i]);

  std::map<std::pair<std::string, std::string>, double> sims;
  for (std::size_t r = 0; r < gt.size(); ++r) {
    const auto& ek = emb.at(canonical_token(gt[r].category));
    for (std::size_t c = 0; c < pred.size(); ++c) {
      const auto& pk = canonical_token(pred[c].category);
      auto [it, inserted] = sims.try_emplace({canonical_token(gt[r].category), pk}, 0.0);
      if (inserted) it->second = reward_sim(ek, emb.at(pk));
      cost.at(r, c) = cost_from_terms(cfg, it->second, gt[r].box, pred[c].box, width, height);
    }
  }
  return cost;
}

std::vector<std::pair<std::size_t, std::size_t>> solve_assignment(const CostMatrix& cost) {
  if (cost.rows == 0 || cost.cols == 0) return {};
  const bool transposed = cost.rows > cost.cols;
  const std::size_t n = transposed ? cost.cols : cost.rows;  // n <= m
  const std::size_t m = transposed ? cost.rows : cost.cols;
  auto a = [&](std::size_t i, std::size_t j) { return transposed ? cost.at(j - 1, i - 1) : cost.at(i - 1, j - 1); };

  // Shortest augmenting path with potentials, 1-based; column 0 is the virtual source.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] == 0) continue;
    if (transposed) {
      pairs.emplace_back(j - 1, owner[j] - 1);
    } else {
      pairs.emplace_back(owner[j] - 1, j - 1);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

Matching matching_from_costs(const CostMatrix& cost, double cost_threshold) {
  Matching out;
  std::vector<bool> gt_used(cost.rows, false), pred_used(cost.cols, false);
  for (const auto& [r, c] : solve_assignment(cost)) {
    if (cost.at(r, c) > cost_threshold) continue;
    out.pairs.emplace_back(r, c);
    gt_used[r] = true;
    pred_used[c] = true;
  }
  for (std::size_t r = 0; r < cost.rows; ++r) {
    if (!gt_used[r]) out.unmatched_gt.push_back(r);
  }
  for (std::size_t c = 0; c < cost.cols; ++c) {
    if (!pred_used[c]) out.unmatched_pred.push_back(c);
  }
  return out;
}

Matching solve_matching(std::span<const ObjectInstance> gt, std::span<const ObjectInstance> pred,
                        const MatchConfig& cfg, EmbeddingStore& store, double width, double height) {
  return matching_from_costs(build_cost_matrix(gt, pred, cfg, store, width, height), cfg.cost_threshold);
}

}  // namespace sggr
