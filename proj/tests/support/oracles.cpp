#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace sggr::testing {

double raw_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::pair<double, std::vector<std::pair<std::size_t, std::size_t>>> brute_force_assignment(
    const std::vector<std::vector<double>>& cost) {
  const std::size_t rows = cost.size();
  const std::size_t cols = rows == 0 ? 0 : cost[0].size();
  if (rows == 0 || cols == 0) return {0.0, {}};
  const bool by_rows = rows <= cols;  // permute the larger side
  const std::size_t small = by_rows ? rows : cols;
  std::vector<std::size_t> perm(by_rows ? cols : rows);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::size_t, std::size_t>> best_pairs;
  do {
    double total = 0;
    for (std::size_t i = 0; i < small; ++i) total += by_rows ? cost[i][perm[i]] : cost[perm[i]][i];
    if (total < best) {
      best = total;
      best_pairs.clear();
      for (std::size_t i = 0; i < small; ++i) {
        best_pairs.emplace_back(by_rows ? i : perm[i], by_rows ? perm[i] : i);
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::sort(best_pairs.begin(), best_pairs.end());
  return {best, best_pairs};
}

std::vector<std::pair<std::size_t, std::size_t>> subset_dp_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t rows = cost.size();
  const std::size_t cols = rows == 0 ? 0 : cost[0].size();
  if (rows == 0 || cols == 0) return {};
  // Rows index the smaller side; masks range over the larger one.
  const bool flip = rows > cols;
  const std::size_t n = flip ? cols : rows;
  const std::size_t m = flip ? rows : cols;
  auto c = [&](std::size_t i, std::size_t j) { return flip ? cost[j][i] : cost[i][j]; };

  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t states = std::size_t{1} << m;
  // best[i][mask]: min cost of placing rows i..n-1 given the columns in mask are taken.
  std::vector<std::vector<double>> best(n + 1, std::vector<double>(states, inf));
  for (std::size_t mask = 0; mask < states; ++mask) best[n][mask] = 0;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t mask = 0; mask < states; ++mask) {
      for (std::size_t j = 0; j < m; ++j) {
        if (mask & (std::size_t{1} << j)) continue;
        best[i][mask] = std::min(best[i][mask], c(i, j) + best[i + 1][mask | (std::size_t{1} << j)]);
      }
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t mask = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pick_j = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask & (std::size_t{1} << j)) continue;
      if (pick_j == m || c(i, j) + best[i + 1][mask | (std::size_t{1} << j)] <
                             c(i, pick_j) + best[i + 1][mask | (std::size_t{1} << pick_j)]) {
        pick_j = j;
      }
    }
    mask |= std::size_t{1} << pick_j;
    pairs.emplace_back(flip ? pick_j : i, flip ? i : pick_j);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

std::vector<int> naive_dbscan(const std::vector<std::vector<double>>& points, double eps, std::size_t min_pts) {
  const std::size_t n = points.size();
  std::vector<std::vector<bool>> close(n, std::vector<bool>(n, false));
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) {
      close[i][j] = 1.0 - raw_cosine(points[i], points[j]) <= eps;
      count += close[i][j] ? 1 : 0;
    }
    core[i] = count >= min_pts;
  }

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (core[i] && core[j] && close[i][j]) parent[find(i)] = find(j);
    }
  }
  // Rank components by their smallest core member.
  std::map<std::size_t, int> rank;
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i] && !rank.contains(find(i))) {
      const int r = static_cast<int>(rank.size());
      rank[find(i)] = r;
    }
  }
  std::vector<int> labels(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      labels[i] = rank.at(find(i));
      continue;
    }
    int best = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (core[j] && close[i][j]) {
        const int r = rank.at(find(j));
        if (best == -1 || r < best) best = r;
      }
    }
    labels[i] = best;
  }
  return labels;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    auto [x, inserted_x] = ab.emplace(a[i], b[i]);
    auto [y, inserted_y] = ba.emplace(b[i], a[i]);
    if (x->second != b[i] || y->second != a[i]) return false;
  }
  return true;
}

namespace {

double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::string category_of(const std::string& instance_key) { return instance_key.substr(0, instance_key.rfind('.')); }

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::vector<double> unit(const std::vector<double>& v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

}  // namespace

ReferenceBreakdown reference_reward(const ParsedCompletion& parsed, const SceneGraph& gt, const DatasetProfile& profile,
                                    const RawTable& table, const RewardConfig& cfg) {
  ReferenceBreakdown out;
  out.format = (parsed.stage_valid[0] + parsed.stage_valid[1] + parsed.stage_valid[2]) / 3.0;
  if (!parsed.graph) {
    out.composite = cfg.weights.format * out.format;
    return out;
  }
  const SceneGraph& pred = *parsed.graph;
  auto vec = [&](const std::string& key) -> const std::vector<double>& { return table.at(lower(key)); };
  auto sim = [&](const std::string& a, const std::string& b) { return std::max(0.0, raw_cosine(vec(a), vec(b))); };
  auto triplet_key = [](const RelationTriplet& r) {
    return category_of(r.subject) + " " + r.predicate + " " + category_of(r.object);
  };

  // Category F1.
  std::set<std::string> pc(parsed.category_stage->begin(), parsed.category_stage->end());
  std::set<std::string> gc;
  for (const auto& o : gt.objects) gc.insert(o.category);
  if (pc.empty() && gc.empty()) {
    out.category = 1.0;
  } else {
    double tp = 0;
    for (const auto& c : pc) tp += gc.count(c);
    const double p = pc.empty() ? 0.0 : tp / static_cast<double>(pc.size());
    const double r = gc.empty() ? 0.0 : tp / static_cast<double>(gc.size());
    out.category = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
  }

  // Object matching.
  const double W = gt.width, H = gt.height;
  std::vector<std::vector<double>> cost(gt.objects.size(), std::vector<double>(pred.objects.size()));
  for (std::size_t g = 0; g < gt.objects.size(); ++g) {
    for (std::size_t p = 0; p < pred.objects.size(); ++p) {
      const auto& a = gt.objects[g].box;
      const auto& b = pred.objects[p].box;
      const double l1 = std::abs(a.x1 - b.x1) / W + std::abs(a.y1 - b.y1) / H + std::abs(a.x2 - b.x2) / W +
                        std::abs(a.y2 - b.y2) / H;
      cost[g][p] = cfg.match.lambda_semantic * (1 - sim(gt.objects[g].category, pred.objects[p].category)) +
                   cfg.match.lambda_iou * (1 - box_iou(a, b)) + cfg.match.lambda_l1 * l1;
    }
  }
  std::map<std::size_t, std::size_t> gt_to_pred;
  for (const auto& [g, p] : subset_dp_assignment(cost)) {
    if (cost[g][p] <= cfg.match.cost_threshold) gt_to_pred[g] = p;
  }

  // Box quality and per-pair recall.
  if (gt.objects.empty()) {
    out.box = out.recall = pred.objects.empty() ? 1.0 : 0.0;
  } else {
    double box = 0, rec = 0;
    for (const auto& [g, p] : gt_to_pred) {
      const auto& a = gt.objects[g].box;
      const auto& b = pred.objects[p].box;
      const double u = box_iou(a, b);
      const double l1 = std::abs(a.x1 - b.x1) / W + std::abs(a.y1 - b.y1) / H + std::abs(a.x2 - b.x2) / W +
                        std::abs(a.y2 - b.y2) / H;
      box += 0.5 * u + 0.5 * std::max(0.0, 1 - l1);
      const bool same = gt.objects[g].category == pred.objects[p].category;
      rec += (u > 0.5 && same) ? 1.0 : ((u > 0.5) != same ? 0.5 : 0.0);
    }
    out.box = box / static_cast<double>(gt.objects.size());
    out.recall = rec / static_cast<double>(gt.objects.size());
  }

  // Predicate frequencies from raw counts.
  std::map<std::string, double> freq;
  double total = 0;
  for (const auto& p : profile.predicates()) {
    auto it = profile.raw_frequencies().find(p);
    if (it != profile.raw_frequencies().end() && it->second > 0) total += it->second;
  }
  double fmin = 1e300, fmax = 0;
  for (const auto& p : profile.predicates()) {
    auto it = profile.raw_frequencies().find(p);
    if (it != profile.raw_frequencies().end() && it->second > 0) {
      freq[p] = it->second / total;
      fmin = std::min(fmin, freq[p]);
      fmax = std::max(fmax, freq[p]);
    }
  }
  if (freq.empty()) fmin = fmax = 1.0 / static_cast<double>(profile.predicates().size());
  for (const auto& p : profile.predicates()) {
    if (!freq.contains(p)) freq[p] = fmin;
  }
  auto weight = [&](const std::string& p) {
    double alpha = 0;
    if (fmax > fmin) alpha = (std::log(1 / freq.at(p)) - std::log(1 / fmax)) / (std::log(1 / fmin) - std::log(1 / fmax));
    return cfg.w_base + cfg.w_inc * alpha;
  };

  // Fine-grained relation similarity.
  if (gt.relations.empty()) {
    out.fine = pred.relations.empty() ? 1.0 : 0.0;
  } else {
    std::map<std::string, std::size_t> gpos, ppos;
    for (std::size_t i = 0; i < gt.objects.size(); ++i) gpos[gt.objects[i].key()] = i;
    for (std::size_t i = 0; i < pred.objects.size(); ++i) ppos[pred.objects[i].key()] = i;
    struct Edge {
      double s;
      std::size_t g, p;
    };
    std::vector<Edge> edges;
    for (std::size_t j = 0; j < gt.relations.size(); ++j) {
      const auto& t = gt.relations[j];
      auto ms = gt_to_pred.find(gpos.at(t.subject));
      auto mo = gt_to_pred.find(gpos.at(t.object));
      if (ms == gt_to_pred.end() || mo == gt_to_pred.end()) continue;
      for (std::size_t i = 0; i < pred.relations.size(); ++i) {
        const auto& q = pred.relations[i];
        if (ppos.at(q.subject) != ms->second || ppos.at(q.object) != mo->second) continue;
        edges.push_back({sim(triplet_key(t), triplet_key(q)) * sim(t.predicate, q.predicate), j, i});
      }
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      if (a.s != b.s) return a.s > b.s;
      if (a.g != b.g) return a.g < b.g;
      return a.p < b.p;
    });
    std::vector<double> s(gt.relations.size(), 0.0);
    std::set<std::size_t> gdone, pdone;
    for (const auto& e : edges) {
      if (gdone.count(e.g) || pdone.count(e.p)) continue;
      gdone.insert(e.g);
      pdone.insert(e.p);
      s[e.g] = e.s;
    }
    double num = 0, den = 0;
    for (std::size_t j = 0; j < gt.relations.size(); ++j) {
      num += s[j] * weight(gt.relations[j].predicate);
      den += weight(gt.relations[j].predicate);
    }
    out.fine = num / den;
  }

  // Coarse coverage x density over prototypes of the ground-truth triplets.
  if (gt.relations.empty()) {
    out.coarse = pred.relations.empty() ? 1.0 : 0.0;
  } else if (pred.relations.empty()) {
    out.coarse = 0.0;
  } else {
    std::vector<std::vector<double>> pts;
    for (const auto& t : gt.relations) pts.push_back(vec(triplet_key(t)));
    const auto labels = naive_dbscan(pts, cfg.dbscan.eps, cfg.dbscan.min_pts);
    std::vector<std::vector<std::size_t>> groups;
    std::map<int, std::size_t> group_of_label;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (labels[i] < 0) {
        groups.push_back({i});
      } else if (auto it = group_of_label.find(labels[i]); it != group_of_label.end()) {
        groups[it->second].push_back(i);
      } else {
        group_of_label[labels[i]] = groups.size();
        groups.push_back({i});
      }
    }
    std::vector<std::vector<double>> centroids;
    for (const auto& g : groups) {
      std::vector<double> mean(pts[0].size(), 0.0);
      for (std::size_t i : g) {
        const auto u = unit(pts[i]);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += u[k] / static_cast<double>(g.size());
      }
      centroids.push_back(mean);
    }
    std::vector<std::size_t> hits(groups.size(), 0);
    for (const auto& q : pred.relations) {
      const auto& v = vec(triplet_key(q));
      std::size_t arg = 0;
      double best = -1;
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double sc = std::max(0.0, raw_cosine(v, centroids[c]));
        if (sc > best) {
          best = sc;
          arg = c;
        }
      }
      if (best >= cfg.tau) ++hits[arg];
    }
    double covered = 0, npred = 0, ngt = 0;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (hits[c] == 0) continue;
      covered += 1;
      npred += static_cast<double>(hits[c]);
      ngt += static_cast<double>(groups[c].size());
    }
    out.coarse = covered == 0 ? 0.0 : (covered / static_cast<double>(groups.size())) * std::min(1.0, npred / ngt);
  }

  out.composite = cfg.weights.format * out.format + cfg.weights.category * out.category +
                  cfg.weights.node * (out.box + out.recall) / 2 +
                  cfg.weights.relation * (cfg.fine_share * out.fine + (1 - cfg.fine_share) * out.coarse);
  return out;
}

GspoReference reference_gspo(const std::vector<double>& rewards, const std::vector<std::vector<double>>& logp_new,
                             const std::vector<std::vector<double>>& logp_old, double epsilon) {
  GspoReference out;
  const double g = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / g;
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean) / g;
  const double sd = std::sqrt(var);
  double sum = 0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const double a = sd < 1e-8 ? 0.0 : (rewards[i] - mean) / sd;
    double d = 0;
    for (std::size_t t = 0; t < logp_new[i].size(); ++t) d += logp_new[i][t] - logp_old[i][t];
    const double s = std::exp(d / static_cast<double>(logp_new[i].size()));
    const double clipped = std::min(std::max(s, 1 - epsilon), 1 + epsilon);
    out.advantages.push_back(a);
    out.ratios.push_back(s);
    sum += std::min(s * a, clipped * a);
  }
  out.objective = sum / g;
  return out;
}

}  // namespace sggr::testing
