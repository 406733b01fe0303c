#include "sggr/graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "sggr/error.hpp"

namespace sggr {

bool BoundingBox::well_formed() const {
  for (double v : {x1, y1, x2, y2}) {
    if (!std::isfinite(v) || v < 0) return false;
  }
  return x1 < x2 && y1 < y2;
}

std::optional<BoundingBox> clamp_to_frame(const BoundingBox& box, double width, double height) {
  for (double v : {box.x1, box.y1, box.x2, box.y2}) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  const double lo = -kClampTolerancePx;
  if (box.x1 < lo || box.y1 < lo || box.x2 > width + kClampTolerancePx ||
      box.y2 > height + kClampTolerancePx) {
    return std::nullopt;
  }
  BoundingBox out{std::clamp(box.x1, 0.0, width), std::clamp(box.y1, 0.0, height),
                  std::clamp(box.x2, 0.0, width), std::clamp(box.y2, 0.0, height)};
  if (!out.well_formed()) return std::nullopt;
  return out;
}

std::string InstanceKey::str() const { return category + "." + std::to_string(index); }

std::optional<InstanceKey> parse_instance_key(std::string_view key) {
  const auto dot = key.rfind('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == key.size()) return std::nullopt;
  const std::string_view digits = key.substr(dot + 1);
  if (!std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return std::nullopt;
  }
  if (digits.size() > 1 && digits.front() == '0') return std::nullopt;
  int index = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || index <= 0) return std::nullopt;
  return InstanceKey{std::string(key.substr(0, dot)), index};
}

std::optional<std::size_t> SceneGraph::find_object(std::string_view key) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].key() == key) return i;
  }
  return std::nullopt;
}

bool same_graph(const SceneGraph& a, const SceneGraph& b) {
  if (a.image_id != b.image_id || a.width != b.width || a.height != b.height) return false;
  if (a.objects.size() != b.objects.size() || a.relations.size() != b.relations.size()) return false;
  std::map<std::string, BoundingBox> boxes_a, boxes_b;
  for (const auto& o : a.objects) boxes_a.emplace(o.key(), o.box);
  for (const auto& o : b.objects) boxes_b.emplace(o.key(), o.box);
  if (boxes_a != boxes_b) return false;
  using Row = std::tuple<std::string, std::string, std::string, std::string>;
  std::multiset<Row> rel_a, rel_b;
  for (const auto& r : a.relations) rel_a.emplace(r.subject, r.predicate, r.object, r.rel_type);
  for (const auto& r : b.relations) rel_b.emplace(r.subject, r.predicate, r.object, r.rel_type);
  return rel_a == rel_b;
}

DatasetProfile::DatasetProfile(Spec spec) : spec_(std::move(spec)) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };

  if (spec_.categories.empty()) fail("profile has no categories");
  if (spec_.predicates.empty()) fail("profile has no predicates");
  if (spec_.relation_types.empty()) fail("profile has no relation types");
  for (const auto& c : spec_.categories) {
    if (c.empty()) fail("empty category token");
    if (!category_set_.insert(c).second) fail("duplicate category '" + c + "'");
  }
  std::set<std::string> types(spec_.relation_types.begin(), spec_.relation_types.end());
  if (types.size() != spec_.relation_types.size()) fail("duplicate relation type");

  std::set<std::string> preds;
  for (const auto& p : spec_.predicates) {
    if (p.empty()) fail("empty predicate token");
    if (!preds.insert(p).second) fail("duplicate predicate '" + p + "'");
    auto it = spec_.taxonomy.find(p);
    if (it == spec_.taxonomy.end()) fail("predicate '" + p + "' has no taxonomy type");
    if (!types.contains(it->second)) fail("predicate '" + p + "' maps to unknown type '" + it->second + "'");
    taxonomy_.emplace(p, it->second);
  }
  for (const auto& [p, t] : spec_.taxonomy) {
    if (!preds.contains(p)) fail("taxonomy entry for unknown predicate '" + p + "'");
  }

  double total = 0;
  for (const auto& [p, f] : spec_.predicate_freq) {
    if (!preds.contains(p)) fail("frequency for unknown predicate '" + p + "'");
    if (!std::isfinite(f) || f < 0) fail("negative or non-finite frequency for '" + p + "'");
    total += f;
  }
  if (total > 0) {
    double lo = 0, hi = 0;
    bool first = true;
    for (const auto& [p, f] : spec_.predicate_freq) {
      if (f <= 0) continue;
      const double rel = f / total;
      smoothed_.emplace(p, rel);
      lo = first ? rel : std::min(lo, rel);
      hi = first ? rel : std::max(hi, rel);
      first = false;
    }
    f_min_ = lo;
    f_max_ = hi;
    for (const auto& p : spec_.predicates) smoothed_.try_emplace(p, f_min_);
  } else {
    const double uniform = 1.0 / static_cast<double>(spec_.predicates.size());
    for (const auto& p : spec_.predicates) smoothed_.emplace(p, uniform);
    f_min_ = f_max_ = uniform;
  }
}

bool DatasetProfile::has_category(std::string_view c) const { return category_set_.contains(c); }

bool DatasetProfile::has_predicate(std::string_view p) const { return taxonomy_.contains(p); }

bool DatasetProfile::has_relation_type(std::string_view t) const {
  return std::find(spec_.relation_types.begin(), spec_.relation_types.end(), t) != spec_.relation_types.end();
}

std::optional<std::string> DatasetProfile::type_of(std::string_view predicate) const {
  auto it = taxonomy_.find(predicate);
  if (it == taxonomy_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> DatasetProfile::frequency(std::string_view predicate) const {
  auto it = smoothed_.find(predicate);
  if (it == smoothed_.end()) return std::nullopt;
  return it->second;
}

std::vector<Violation> validate_graph(const SceneGraph& graph, const DatasetProfile& profile) {
  std::vector<Violation> out;
  auto add = [&](ViolationScope scope, std::size_t index, std::string code, std::string detail) {
    out.push_back({scope, index, std::move(code), std::move(detail)});
  };

  const bool frame_ok = graph.width > 0 && graph.height > 0;
  if (!frame_ok) add(ViolationScope::Graph, 0, "BAD_DIMENSIONS", "width and height must be positive");

  std::map<std::string, std::vector<std::size_t>> by_category;
  std::set<std::string> seen_keys;
  for (std::size_t i = 0; i < graph.objects.size(); ++i) {
    const auto& o = graph.objects[i];
    if (!profile.has_category(o.category)) add(ViolationScope::Object, i, "UNKNOWN_CATEGORY", o.category);
    if (o.index <= 0) add(ViolationScope::Object, i, "BAD_INDEX", std::to_string(o.index));
    if (!o.box.well_formed()) {
      add(ViolationScope::Object, i, "DEGENERATE_BOX", o.key());
    } else if (frame_ok && !clamp_to_frame(o.box, graph.width, graph.height)) {
      add(ViolationScope::Object, i, "BOX_OUT_OF_BOUNDS", o.key());
    }
    if (!seen_keys.insert(o.key()).second) add(ViolationScope::Object, i, "DUPLICATE_INSTANCE", o.key());
    by_category[o.category].push_back(i);
  }
  for (const auto& [category, members] : by_category) {
    const auto count = static_cast<int>(members.size());
    for (std::size_t i : members) {
      if (graph.objects[i].index > count) {
        add(ViolationScope::Object, i, "NONCONTIGUOUS_INDEX", graph.objects[i].key());
      }
    }
  }

  std::set<std::tuple<std::string, std::string, std::string>> seen_triplets;
  for (std::size_t i = 0; i < graph.relations.size(); ++i) {
    const auto& r = graph.relations[i];
    for (const auto* endpoint : {&r.subject, &r.object}) {
      if (!seen_keys.contains(*endpoint)) add(ViolationScope::Relation, i, "DANGLING_INSTANCE", *endpoint);
    }
    if (r.subject == r.object) add(ViolationScope::Relation, i, "SELF_RELATION", r.subject);
    if (auto type = profile.type_of(r.predicate)) {
      if (*type != r.rel_type) add(ViolationScope::Relation, i, "REL_TYPE_MISMATCH", r.predicate + ":" + r.rel_type);
    } else {
      add(ViolationScope::Relation, i, "UNKNOWN_PREDICATE", r.predicate);
    }
    if (!seen_triplets.emplace(r.subject, r.predicate, r.object).second) {
      add(ViolationScope::Relation, i, "DUPLICATE_TRIPLET", r.subject + " " + r.predicate + " " + r.object);
    }
  }

  std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
    return std::tie(a.scope, a.index, a.code) < std::tie(b.scope, b.index, b.code);
  });
  return out;
}

void clamp_boxes(SceneGraph& graph) {
  if (graph.width <= 0 || graph.height <= 0) return;
  for (auto& o : graph.objects) {
    if (auto clamped = clamp_to_frame(o.box, graph.width, graph.height)) o.box = *clamped;
  }
}

std::string canonical_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  bool pending_space = false;
  for (unsigned char c : token) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string canonical_key(std::string_view subject, std::string_view predicate, std::string_view object) {
  auto s = parse_instance_key(subject);
  auto o = parse_instance_key(object);
  if (!s) throw Error(ErrorCode::KeyFormat, "malformed instance key '" + std::string(subject) + "'");
  if (!o) throw Error(ErrorCode::KeyFormat, "malformed instance key '" + std::string(object) + "'");
  return canonical_token(s->category) + " " + canonical_token(predicate) + " " + canonical_token(o->category);
}

}  // namespace sggr
