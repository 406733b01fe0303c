#include "sggr/sgdet_eval.hpp"

#include <algorithm>
#include <cmath>

#include "sggr/assignment.hpp"
#include "sggr/error.hpp"

namespace sggr {

void EvalConfig::validate() const {
  if (!(iou_threshold > 0 && iou_threshold < 1)) throw Error(ErrorCode::InvalidConfig, "iou_threshold must lie in (0,1)");
  if (top_k && *top_k == 0) throw Error(ErrorCode::InvalidConfig, "top_k must be positive");
}

std::string PartitionSpec::group_of(const std::string& predicate) const {
  auto in = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), predicate) != v.end(); };
  if (in(head)) return "head";
  if (in(body)) return "body";
  if (in(tail)) return "tail";
  return {};
}

std::vector<ResolvedTriplet> resolve_triplets(const SceneGraph& g) {
  std::vector<ResolvedTriplet> out;
  out.reserve(g.relations.size());
  for (const auto& r : g.relations) {
    auto s = g.find_object(r.subject);
    auto o = g.find_object(r.object);
    if (!s || !o) continue;
    const auto& so = g.objects[*s];
    const auto& oo = g.objects[*o];
    out.push_back({so.category, so.box, r.predicate, oo.category, oo.box});
  }
  return out;
}

bool triplet_correct(const ResolvedTriplet& gt, const ResolvedTriplet& pred, const EvalConfig& cfg) {
  return gt.subject_class == pred.subject_class && gt.predicate == pred.predicate &&
         gt.object_class == pred.object_class && iou(gt.subject_box, pred.subject_box) >= cfg.iou_threshold &&
         iou(gt.object_box, pred.object_box) >= cfg.iou_threshold;
}

void SceneTally::merge(const SceneTally& other) {
  for (const auto& [p, c] : other.per_predicate) per_predicate[p] += c;
  zero_shot += other.zero_shot;
  for (const auto& [k, c] : other.per_category) per_category[k] += c;
  scenes += other.scenes;
  failed_parses += other.failed_parses;
}

SceneTally evaluate_scene(const SceneGraph& gt, const SceneGraph& pred, const DatasetProfile& profile,
                          const EvalConfig& cfg) {
  SceneTally tally;
  tally.scenes = 1;

  const auto gt_triplets = resolve_triplets(gt);
  auto pred_triplets = resolve_triplets(pred);
  if (cfg.top_k && pred_triplets.size() > *cfg.top_k) pred_triplets.resize(*cfg.top_k);

  std::vector<bool> claimed(gt_triplets.size(), false);
  for (const auto& p : pred_triplets) {
    for (std::size_t j = 0; j < gt_triplets.size(); ++j) {
      if (!claimed[j] && triplet_correct(gt_triplets[j], p, cfg)) {
        claimed[j] = true;
        break;
      }
    }
  }
  for (std::size_t j = 0; j < gt_triplets.size(); ++j) {
    const auto& t = gt_triplets[j];
    const std::size_t hit = claimed[j] ? 1 : 0;
    tally.per_predicate[t.predicate] += HitCount{1, hit};
    if (!profile.is_seen_triplet({t.subject_class, t.predicate, t.object_class})) tally.zero_shot += HitCount{1, hit};
  }

  std::vector<bool> object_claimed(gt.objects.size(), false);
  for (const auto& p : pred.objects) {
    for (std::size_t j = 0; j < gt.objects.size(); ++j) {
      if (!object_claimed[j] && gt.objects[j].category == p.category &&
          iou(gt.objects[j].box, p.box) >= cfg.iou_threshold) {
        object_claimed[j] = true;
        break;
      }
    }
  }
  for (std::size_t j = 0; j < gt.objects.size(); ++j) {
    tally.per_category[gt.objects[j].category] += HitCount{1, object_claimed[j] ? std::size_t{1} : std::size_t{0}};
  }
  return tally;
}

namespace {

double ratio(const HitCount& c) { return c.gt == 0 ? 0.0 : static_cast<double>(c.hit) / static_cast<double>(c.gt); }

}  // namespace

EvalReport aggregate(std::span<const SceneTally> tallies, const DatasetProfile& profile, const PartitionSpec& partition) {
  (void)profile;
  SceneTally total;
  for (const auto& t : tallies) total.merge(t);
  if (total.scenes == 0) throw Error(ErrorCode::EmptyBatch, "no scenes to aggregate");

  EvalReport r;
  HitCount all;
  std::map<std::string, std::vector<double>> by_group{{"head", {}}, {"body", {}}, {"tail", {}}};
  double macro = 0;
  for (const auto& [p, c] : total.per_predicate) {
    if (c.gt == 0) continue;
    all += c;
    const double rec = ratio(c);
    r.per_predicate_recall[p] = rec;
    macro += rec;
    if (auto g = partition.group_of(p); !g.empty()) by_group[g].push_back(rec);
  }
  r.recall = ratio(all);
  r.m_recall = r.per_predicate_recall.empty() ? 0.0 : macro / static_cast<double>(r.per_predicate_recall.size());
  for (const auto& [g, recs] : by_group) {
    double s = 0;
    for (double x : recs) s += x;
    r.group_recall[g] = recs.empty() ? 0.0 : s / static_cast<double>(recs.size());
  }
  r.zs_recall = ratio(total.zero_shot);

  HitCount det;
  double det_macro = 0;
  std::size_t det_classes = 0;
  for (const auto& [k, c] : total.per_category) {
    if (c.gt == 0) continue;
    det += c;
    det_macro += ratio(c);
    ++det_classes;
  }
  r.det_recall = ratio(det);
  r.det_m_recall = det_classes == 0 ? 0.0 : det_macro / static_cast<double>(det_classes);
  r.failure_rate = static_cast<double>(total.failed_parses) / static_cast<double>(total.scenes);
  return r;
}

PartitionSpec partition_predicates(const DatasetProfile& profile) {
  const auto& preds = profile.predicates();
  if (preds.size() < 4) throw Error(ErrorCode::VocabTooSmall, "need at least 4 predicates, got " + std::to_string(preds.size()));
  std::vector<std::pair<double, std::string>> ranked;
  ranked.reserve(preds.size());
  for (const auto& p : preds) ranked.emplace_back(*profile.frequency(p), p);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  // floor(0.3 * N) in integer arithmetic.
  const std::size_t n = ranked.size();
  const std::size_t head = n * 3 / 10;
  PartitionSpec out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& group = i < head ? out.head : (i < 2 * head ? out.body : out.tail);
    group.push_back(ranked[i].second);
  }
  return out;
}

ordered_json eval_report_to_json(const EvalReport& r) {
  ordered_json j;
  j["recall"] = r.recall;
  j["m_recall"] = r.m_recall;
  j["zs_recall"] = r.zs_recall;
  j["per_predicate_recall"] = r.per_predicate_recall;
  j["group_recall"] = r.group_recall;
  j["det_recall"] = r.det_recall;
  j["det_m_recall"] = r.det_m_recall;
  j["failure_rate"] = r.failure_rate;
  return j;
}

}  // namespace sggr
