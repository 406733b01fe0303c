#include "sggr/structured_io.hpp"

#include <algorithm>
#include <set>

#include "sggr/codec.hpp"
#include "sggr/error.hpp"

namespace sggr {

namespace {

constexpr std::array<std::string_view, 3> kTagNames{"CATEGORY", "OBJECT", "RELATION"};

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

struct Payload {
  std::string_view text;
  std::string error;
};

// Exactly one open tag followed by exactly one close tag.
Payload extract_stage(std::string_view text, std::string_view name) {
  const std::string open = "<" + std::string(name) + ">";
  const std::string close = "</" + std::string(name) + ">";
  const auto n_open = count_occurrences(text, open);
  const auto n_close = count_occurrences(text, close);
  if (n_open == 0 || n_close == 0) return {{}, "missing " + (n_open == 0 ? open : close)};
  if (n_open > 1 || n_close > 1) return {{}, "duplicate " + std::string(name) + " tags"};
  const auto begin = text.find(open) + open.size();
  const auto end = text.find(close);
  if (end < begin) return {{}, close + " precedes " + open};
  return {text.substr(begin, end - begin), {}};
}

std::optional<json> parse_payload(std::string_view payload, std::string& error) {
  auto doc = json::parse(payload.begin(), payload.end(), nullptr, false);
  if (doc.is_discarded()) {
    error = "payload is not valid JSON";
    return std::nullopt;
  }
  return doc;
}

std::optional<std::vector<std::string>> read_categories(const json& doc, const DatasetProfile& profile,
                                                        std::string& error) {
  if (!doc.is_array()) {
    error = "category payload must be an array";
    return std::nullopt;
  }
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : doc) {
    if (!e.is_string()) {
      error = "category entries must be strings";
      return std::nullopt;
    }
    auto c = e.get<std::string>();
    if (!profile.has_category(c)) {
      error = "unknown category '" + c + "'";
      return std::nullopt;
    }
    if (!seen.insert(c).second) {
      error = "duplicate category '" + c + "'";
      return std::nullopt;
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::optional<std::vector<ObjectInstance>> read_objects(const json& doc, const DatasetProfile& profile,
                                                        std::optional<ImageSize> frame, std::string& error) {
  if (!doc.is_array()) {
    error = "object payload must be an array";
    return std::nullopt;
  }
  std::vector<ObjectInstance> out;
  std::set<std::string> ids;
  std::map<std::string, std::vector<int>> indices;
  for (const auto& e : doc) {
    if (!e.is_object() || e.size() != 2 || !e.contains("id") || !e.contains("bbox")) {
      error = "object entries must be {\"id\",\"bbox\"}";
      return std::nullopt;
    }
    const auto& id = e["id"];
    const auto& bbox = e["bbox"];
    if (!id.is_string()) {
      error = "object id must be a string";
      return std::nullopt;
    }
    auto key = parse_instance_key(id.get<std::string>());
    if (!key) {
      error = "malformed instance id '" + id.get<std::string>() + "'";
      return std::nullopt;
    }
    if (!profile.has_category(key->category)) {
      error = "unknown category '" + key->category + "'";
      return std::nullopt;
    }
    if (!bbox.is_array() || bbox.size() != 4 ||
        !std::all_of(bbox.begin(), bbox.end(), [](const json& v) { return v.is_number(); })) {
      error = "bbox must be an array of 4 numbers";
      return std::nullopt;
    }
    BoundingBox box{bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(), bbox[3].get<double>()};
    if (frame) {
      auto clamped = clamp_to_frame(box, frame->width, frame->height);
      if (!clamped) {
        error = "box of '" + key->str() + "' is degenerate or outside the image";
        return std::nullopt;
      }
      box = *clamped;
    } else if (!box.well_formed()) {
      error = "box of '" + key->str() + "' is degenerate";
      return std::nullopt;
    }
    if (!ids.insert(key->str()).second) {
      error = "duplicate instance '" + key->str() + "'";
      return std::nullopt;
    }
    indices[key->category].push_back(key->index);
    out.push_back({key->category, key->index, box});
  }
  for (auto& [category, idx] : indices) {
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] != static_cast<int>(i) + 1) {
        error = "instance suffixes of '" + category + "' are not 1..n";
        return std::nullopt;
      }
    }
  }
  return out;
}

std::optional<std::map<std::string, std::vector<RelationTriplet>>> read_relations(const json& doc,
                                                                                 const DatasetProfile& profile,
                                                                                 std::string& error) {
  const auto& types = profile.relation_types();
  if (!doc.is_object() || doc.size() != types.size()) {
    error = "relation payload must be an object keyed by the relation types";
    return std::nullopt;
  }
  std::map<std::string, std::vector<RelationTriplet>> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& type : types) {
    auto it = doc.find(type);
    if (it == doc.end() || !it->is_array()) {
      error = "relation type '" + type + "' missing or not an array";
      return std::nullopt;
    }
    auto& group = out[type];
    for (const auto& t : *it) {
      if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() || !t[2].is_string()) {
        error = "relations must be [subject, predicate, object] string triples";
        return std::nullopt;
      }
      RelationTriplet r{t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>(), type};
      for (const auto* k : {&r.subject, &r.object}) {
        auto key = parse_instance_key(*k);
        if (!key || !profile.has_category(key->category)) {
          error = "bad instance reference '" + *k + "'";
          return std::nullopt;
        }
      }
      auto ptype = profile.type_of(r.predicate);
      if (!ptype) {
        error = "unknown predicate '" + r.predicate + "'";
        return std::nullopt;
      }
      if (*ptype != type) {
        error = "predicate '" + r.predicate + "' listed under '" + type + "'";
        return std::nullopt;
      }
      if (r.subject == r.object) {
        error = "self relation on '" + r.subject + "'";
        return std::nullopt;
      }
      if (!seen.emplace(r.subject, r.predicate, r.object).second) {
        error = "duplicate triplet";
        return std::nullopt;
      }
      group.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace

int ParsedCompletion::valid_stage_count() const {
  return static_cast<int>(std::count(stage_valid.begin(), stage_valid.end(), true));
}

ParsedCompletion parse_completion(std::string_view text, const DatasetProfile& profile,
                                  std::optional<ImageSize> frame, std::string image_id) {
  ParsedCompletion out;
  std::array<std::optional<json>, 3> docs;
  for (int s = 0; s < 3; ++s) {
    auto payload = extract_stage(text, kTagNames[s]);
    if (!payload.error.empty()) {
      out.stage_error[s] = std::move(payload.error);
      continue;
    }
    docs[s] = parse_payload(payload.text, out.stage_error[s]);
  }

  if (docs[0]) out.category_stage = read_categories(*docs[0], profile, out.stage_error[0]);
  out.stage_valid[0] = out.category_stage.has_value();

  if (docs[1]) out.object_stage = read_objects(*docs[1], profile, frame, out.stage_error[1]);
  if (out.object_stage && out.category_stage) {
    const std::set<std::string> listed(out.category_stage->begin(), out.category_stage->end());
    for (const auto& o : *out.object_stage) {
      if (!listed.contains(o.category)) {
        out.stage_error[1] = "category '" + o.category + "' not listed in the category stage";
        out.object_stage.reset();
        break;
      }
    }
  }
  out.stage_valid[1] = out.object_stage.has_value();

  if (docs[2]) out.relation_stage = read_relations(*docs[2], profile, out.stage_error[2]);
  if (out.relation_stage) {
    std::set<std::string> known;
    if (out.object_stage) {
      for (const auto& o : *out.object_stage) known.insert(o.key());
    }
    for (const auto& [type, group] : *out.relation_stage) {
      for (const auto& r : group) {
        for (const auto* k : {&r.subject, &r.object}) {
          if (!known.contains(*k)) {
            out.stage_error[2] = "relation references unknown instance '" + *k + "'";
            out.relation_stage.reset();
            break;
          }
        }
        if (!out.relation_stage) break;
      }
      if (!out.relation_stage) break;
    }
  }
  out.stage_valid[2] = out.relation_stage.has_value();

  if (out.stage_valid[0] && out.stage_valid[1] && out.stage_valid[2]) {
    SceneGraph g;
    g.image_id = std::move(image_id);
    if (frame) {
      g.width = frame->width;
      g.height = frame->height;
    }
    g.objects = *out.object_stage;
    for (const auto& type : profile.relation_types()) {
      const auto& group = out.relation_stage->at(type);
      g.relations.insert(g.relations.end(), group.begin(), group.end());
    }
    out.graph = std::move(g);
  }
  return out;
}

double format_reward(const ParsedCompletion& parsed) { return parsed.valid_stage_count() / 3.0; }

SceneGraph canonicalize_for_cot(const SceneGraph& graph, const DatasetProfile& profile) {
  std::vector<std::string> order;
  for (const auto& o : graph.objects) {
    if (std::find(order.begin(), order.end(), o.category) == order.end()) order.push_back(o.category);
  }
  SceneGraph out;
  out.image_id = graph.image_id;
  out.width = graph.width;
  out.height = graph.height;
  std::map<std::string, std::string> rename;
  std::map<std::string, std::size_t> position;
  for (const auto& category : order) {
    int next = 1;
    for (const auto& o : graph.objects) {
      if (o.category != category) continue;
      ObjectInstance renamed{o.category, next++, o.box};
      rename[o.key()] = renamed.key();
      position[renamed.key()] = out.objects.size();
      out.objects.push_back(std::move(renamed));
    }
  }

  const auto& types = profile.relation_types();
  auto type_rank = [&](const std::string& t) {
    return static_cast<std::size_t>(std::find(types.begin(), types.end(), t) - types.begin());
  };
  for (const auto& r : graph.relations) {
    out.relations.push_back({rename.at(r.subject), r.predicate, rename.at(r.object), r.rel_type});
  }
  std::stable_sort(out.relations.begin(), out.relations.end(), [&](const RelationTriplet& a, const RelationTriplet& b) {
    return std::make_tuple(type_rank(a.rel_type), position.at(a.subject), position.at(a.object), std::cref(a.predicate)) <
           std::make_tuple(type_rank(b.rel_type), position.at(b.subject), position.at(b.object), std::cref(b.predicate));
  });
  return out;
}

CotRecord serialize_cot(const SceneGraph& graph, const DatasetProfile& profile) {
  if (auto violations = validate_graph(graph, profile); !violations.empty()) {
    const auto& v = violations.front();
    throw Error(ErrorCode::SerializeInvalidGraph,
                "graph '" + graph.image_id + "' is invalid: " + v.code + " (" + v.detail + ")");
  }
  const SceneGraph g = canonicalize_for_cot(graph, profile);

  ordered_json categories = ordered_json::array();
  for (const auto& o : g.objects) {
    if (std::find(categories.begin(), categories.end(), o.category) == categories.end()) categories.push_back(o.category);
  }
  ordered_json objects = ordered_json::array();
  for (const auto& o : g.objects) {
    objects.push_back({{"id", o.key()}, {"bbox", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}}});
  }
  ordered_json relations = ordered_json::object();
  for (const auto& type : profile.relation_types()) relations[type] = ordered_json::array();
  for (const auto& r : g.relations) relations[r.rel_type].push_back({r.subject, r.predicate, r.object});

  CotRecord rec;
  rec.prompt_ref = graph.image_id;
  rec.response_text = "<CATEGORY>" + categories.dump() + "</CATEGORY>\n<OBJECT>" + objects.dump() +
                      "</OBJECT>\n<RELATION>" + relations.dump() + "</RELATION>";
  return rec;
}

double failure_rate(std::span<const ParsedCompletion> results) {
  if (results.empty()) throw Error(ErrorCode::EmptyBatch, "failure_rate needs at least one completion");
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.graph; });
  return static_cast<double>(failed) / static_cast<double>(results.size());
}

}  // namespace sggr
