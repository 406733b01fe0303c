#include "sggr/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sggr/error.hpp"

namespace sggr {

void RewardConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (!(w_base > 0) || !std::isfinite(w_base)) fail("w_base must be positive");
  if (!(w_inc >= 0) || !std::isfinite(w_inc)) fail("w_inc must be non-negative");
  if (!(tau > 0 && tau < 1)) fail("tau must lie in (0,1)");
  if (!(fine_share >= 0 && fine_share <= 1)) fail("fine_share must lie in [0,1]");
  const double parts[] = {weights.format, weights.category, weights.node, weights.relation};
  double sum = 0;
  for (double w : parts) {
    if (!(w >= 0) || !std::isfinite(w)) fail("composite weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail("composite weights must sum to 1");
  dbscan.validate();
  match.validate();
}

double category_reward(const std::set<std::string>& pred, const std::set<std::string>& gt) {
  if (pred == gt) return 1.0;
  std::size_t tp = 0;
  for (const auto& c : pred) tp += gt.contains(c) ? 1 : 0;
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(tp) / static_cast<double>(gt.size());
  return 2.0 * precision * recall / (precision + recall);
}

double pair_recall(double iou_value, bool same_category) {
  const bool overlaps = iou_value > 0.5;
  if (overlaps && same_category) return 1.0;
  if (overlaps != same_category) return 0.5;
  return 0.0;
}

NodeReward node_reward(const Matching& matching, std::span<const ObjectInstance> gt,
                       std::span<const ObjectInstance> pred, double width, double height) {
  if (gt.empty()) return pred.empty() ? NodeReward{1.0, 1.0} : NodeReward{0.0, 0.0};
  double box_sum = 0;
  double recall_sum = 0;
  for (const auto& [g, p] : matching.pairs) {
    const double overlap = iou(gt[g].box, pred[p].box);
    box_sum += 0.5 * overlap + 0.5 * std::max(0.0, 1.0 - l1_norm(gt[g].box, pred[p].box, width, height));
    recall_sum += pair_recall(overlap, gt[g].category == pred[p].category);
  }
  const auto n = static_cast<double>(gt.size());
  return {box_sum / n, recall_sum / n};
}

double predicate_weight(std::string_view predicate, const DatasetProfile& profile, const RewardConfig& cfg) {
  const auto f = profile.frequency(predicate);
  if (!f) throw Error(ErrorCode::UnknownPredicate, "'" + std::string(predicate) + "' is not in the profile");
  const double f_max = profile.f_max();
  const double f_min = profile.f_min();
  double alpha = 0.0;
  if (f_max > f_min) {
    alpha = (std::log(1.0 / *f) - std::log(1.0 / f_max)) / (std::log(1.0 / f_min) - std::log(1.0 / f_max));
    alpha = std::clamp(alpha, 0.0, 1.0);
  }
  return cfg.w_base + cfg.w_inc * alpha;
}

namespace {

struct TripletEmbeddings {
  std::vector<EmbeddingVector> triplet;
  std::vector<EmbeddingVector> predicate;
};

TripletEmbeddings embed_relations(const SceneGraph& g, EmbeddingStore& store, bool with_predicates) {
  std::vector<std::string> keys;
  keys.reserve(g.relations.size() * 2);
  for (const auto& r : g.relations) keys.push_back(canonical_key(r.subject, r.predicate, r.object));
  if (with_predicates) {
    for (const auto& r : g.relations) keys.push_back(canonical_token(r.predicate));
  }
  auto vectors = store.embed_many(keys);
  TripletEmbeddings out;
  const auto n = g.relations.size();
  out.triplet.assign(vectors.begin(), vectors.begin() + static_cast<std::ptrdiff_t>(n));
  if (with_predicates) out.predicate.assign(vectors.begin() + static_cast<std::ptrdiff_t>(n), vectors.end());
  return out;
}

std::map<std::string, std::size_t> key_positions(const SceneGraph& g) {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < g.objects.size(); ++i) out.emplace(g.objects[i].key(), i);
  return out;
}

}  // namespace

double fine_reward(const SceneGraph& gt, const SceneGraph& pred, const Matching& matching,
                   const DatasetProfile& profile, const RewardConfig& cfg, EmbeddingStore& store) {
  if (gt.relations.empty()) return pred.relations.empty() ? 1.0 : 0.0;

  std::vector<double> weights(gt.relations.size());
  double weight_sum = 0;
  for (std::size_t j = 0; j < gt.relations.size(); ++j) {
    weights[j] = predicate_weight(gt.relations[j].predicate, profile, cfg);
    weight_sum += weights[j];
  }
  if (pred.relations.empty()) return 0.0;

  const auto gt_pos = key_positions(gt);
  const auto pred_pos = key_positions(pred);
  std::map<std::size_t, std::size_t> pred_to_gt;
  for (const auto& [g, p] : matching.pairs) pred_to_gt.emplace(p, g);
  auto mapped = [&](const std::string& pred_key) -> std::optional<std::size_t> {
    auto it = pred_pos.find(pred_key);
    if (it == pred_pos.end()) return std::nullopt;
    auto m = pred_to_gt.find(it->second);
    if (m == pred_to_gt.end()) return std::nullopt;
    return m->second;
  };

  struct Edge {
    double sim;
    std::size_t gt;
    std::size_t pred;
  };
  std::vector<Edge> edges;
  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> pred_endpoints(pred.relations.size());
  for (std::size_t i = 0; i < pred.relations.size(); ++i) {
    auto s = mapped(pred.relations[i].subject);
    auto o = mapped(pred.relations[i].object);
    if (s && o) pred_endpoints[i] = std::make_pair(*s, *o);
  }
  const auto ge = embed_relations(gt, store, true);
  const auto pe = embed_relations(pred, store, true);
  for (std::size_t j = 0; j < gt.relations.size(); ++j) {
    const std::pair ends{gt_pos.at(gt.relations[j].subject), gt_pos.at(gt.relations[j].object)};
    for (std::size_t i = 0; i < pred.relations.size(); ++i) {
      if (!pred_endpoints[i] || *pred_endpoints[i] != ends) continue;
      const double sim = reward_sim(ge.triplet[j], pe.triplet[i]) * reward_sim(ge.predicate[j], pe.predicate[i]);
      edges.push_back({sim, j, i});
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return std::tie(a.gt, a.pred) < std::tie(b.gt, b.pred);
  });

  std::vector<double> sim(gt.relations.size(), 0.0);
  std::vector<bool> gt_done(gt.relations.size(), false), pred_used(pred.relations.size(), false);
  for (const auto& e : edges) {
    if (gt_done[e.gt] || pred_used[e.pred]) continue;
    gt_done[e.gt] = true;
    pred_used[e.pred] = true;
    sim[e.gt] = e.sim;
  }
  double num = 0;
  for (std::size_t j = 0; j < sim.size(); ++j) num += sim[j] * weights[j];
  return std::clamp(num / weight_sum, 0.0, 1.0);
}

double coarse_reward(const SceneGraph& gt, const SceneGraph& pred, const RewardConfig& cfg, EmbeddingStore& store) {
  if (gt.relations.empty()) return pred.relations.empty() ? 1.0 : 0.0;
  if (pred.relations.empty()) return 0.0;

  const auto ge = embed_relations(gt, store, false);
  const auto prototypes = build_prototypes(ge.triplet, cfg.dbscan);
  const auto pe = embed_relations(pred, store, false);

  std::vector<std::size_t> pred_count(prototypes.clusters.size(), 0);
  for (const auto& e : pe.triplet) {
    if (auto id = assign_prediction(e, prototypes, cfg.tau)) ++pred_count[*id];
  }
  std::size_t covered = 0, covered_pred = 0, covered_gt = 0;
  for (std::size_t c = 0; c < prototypes.clusters.size(); ++c) {
    if (pred_count[c] == 0) continue;
    ++covered;
    covered_pred += pred_count[c];
    covered_gt += prototypes.clusters[c].members.size();
  }
  if (covered == 0) return 0.0;
  const double coverage = static_cast<double>(covered) / static_cast<double>(prototypes.clusters.size());
  const double density = std::min(1.0, static_cast<double>(covered_pred) / static_cast<double>(covered_gt));
  return coverage * density;
}

RewardBreakdown score_parsed(const ParsedCompletion& parsed, const SceneGraph& gt, const DatasetProfile& profile,
                             const RewardConfig& cfg, EmbeddingStore& store) {
  RewardBreakdown out;
  out.format = format_reward(parsed);
  if (!parsed.graph) {
    out.composite = cfg.weights.format * out.format;
    return out;
  }
  const SceneGraph& pred = *parsed.graph;

  std::set<std::string> gt_categories;
  for (const auto& o : gt.objects) gt_categories.insert(o.category);
  const std::set<std::string> pred_categories(parsed.category_stage->begin(), parsed.category_stage->end());
  out.category = category_reward(pred_categories, gt_categories);

  const auto matching = solve_matching(gt.objects, pred.objects, cfg.match, store, gt.width, gt.height);
  const auto node = node_reward(matching, gt.objects, pred.objects, gt.width, gt.height);
  out.box = node.box;
  out.recall = node.recall;
  out.fine = fine_reward(gt, pred, matching, profile, cfg, store);
  out.coarse = coarse_reward(gt, pred, cfg, store);

  const double node_part = 0.5 * out.box + 0.5 * out.recall;
  const double relation_part = cfg.fine_share * out.fine + (1.0 - cfg.fine_share) * out.coarse;
  out.composite = cfg.weights.format * out.format + cfg.weights.category * out.category +
                  cfg.weights.node * node_part + cfg.weights.relation * relation_part;
  out.composite = std::clamp(out.composite, 0.0, 1.0);
  return out;
}

RewardBreakdown composite_reward(std::string_view text, const SceneGraph& gt, const DatasetProfile& profile,
                                 const RewardConfig& cfg, EmbeddingStore& store) {
  const auto parsed = parse_completion(text, profile, ImageSize{gt.width, gt.height}, gt.image_id);
  return score_parsed(parsed, gt, profile, cfg, store);
}

namespace {

ScoreOutcome score_one(const ScoreItem& item, const DatasetProfile& profile, const RewardConfig& cfg,
                       EmbeddingStore& store) {
  ScoreOutcome out;
  if (!item.gt) {
    out.error_code = "UNKNOWN_IMAGE";
    out.error_message = "image_id not present in the ground-truth store";
    return out;
  }
  try {
    out.breakdown = composite_reward(item.text, *item.gt, profile, cfg, store);
  } catch (const Error& e) {
    out.error_code = std::string(to_string(e.code));
    out.error_message = e.what();
  } catch (const std::exception& e) {
    out.error_code = "INTERNAL";
    out.error_message = e.what();
  }
  return out;
}

}  // namespace

std::vector<ScoreOutcome> score_batch(std::span<const ScoreItem> items, const DatasetProfile& profile,
                                      const RewardConfig& cfg, EmbeddingStore& store, int threads) {
  std::vector<ScoreOutcome> out(items.size());
  const auto n = static_cast<std::ptrdiff_t>(items.size());
#ifdef _OPENMP
  const int workers = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 4) num_threads(workers)
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = score_one(items[i], profile, cfg, store);
  (void)threads;
  return out;
}

std::vector<ScoreOutcome> score_batch_serial(std::span<const ScoreItem> items, const DatasetProfile& profile,
                                             const RewardConfig& cfg, EmbeddingStore& store) {
  std::vector<ScoreOutcome> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(score_one(item, profile, cfg, store));
  return out;
}

}  // namespace sggr
