#include "sggr/codec.hpp"

#include <fstream>
#include <sstream>

#include "sggr/error.hpp"

namespace sggr {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::InvalidInput, msg); }

const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) bad(std::string("missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_string()) bad(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) bad("bbox must be an array of 4 numbers");
  std::array<double, 4> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) bad("bbox must be an array of 4 numbers");
    v[i] = j[i].get<double>();
  }
  return {v[0], v[1], v[2], v[3]};
}

std::vector<std::string> string_list(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_array()) bad(std::string("field '") + name + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) bad(std::string("field '") + name + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

SceneGraph scene_graph_from_json(const json& j, const DatasetProfile* profile) {
  if (!j.is_object()) bad("scene graph must be a JSON object");
  SceneGraph g;
  g.image_id = string_field(j, "image_id");
  const auto& w = field(j, "width");
  const auto& h = field(j, "height");
  if (!w.is_number_integer() || !h.is_number_integer()) bad("width/height must be integers");
  g.width = w.get<int>();
  g.height = h.get<int>();

  const auto& objects = field(j, "objects");
  if (!objects.is_array()) bad("'objects' must be an array");
  for (const auto& o : objects) {
    if (!o.is_object()) bad("object entries must be JSON objects");
    const auto id = string_field(o, "id");
    auto key = parse_instance_key(id);
    if (!key) throw Error(ErrorCode::KeyFormat, "malformed instance id '" + id + "'");
    if (auto it = o.find("category"); it != o.end()) {
      if (!it->is_string() || it->get<std::string>() != key->category) {
        bad("object '" + id + "' category does not match its id");
      }
    }
    g.objects.push_back({key->category, key->index, box_from_json(field(o, "bbox"))});
  }

  if (auto it = j.find("relations"); it != j.end()) {
    if (!it->is_array()) bad("'relations' must be an array");
    for (const auto& r : *it) {
      if (!r.is_object()) bad("relation entries must be JSON objects");
      RelationTriplet t{string_field(r, "subject"), string_field(r, "predicate"), string_field(r, "object"), {}};
      if (auto ty = r.find("type"); ty != r.end()) {
        if (!ty->is_string()) bad("relation 'type' must be a string");
        t.rel_type = ty->get<std::string>();
      } else if (profile) {
        t.rel_type = profile->type_of(t.predicate).value_or("");
      }
      g.relations.push_back(std::move(t));
    }
  }
  return g;
}

ordered_json scene_graph_to_json(const SceneGraph& g) {
  ordered_json j;
  j["image_id"] = g.image_id;
  j["width"] = g.width;
  j["height"] = g.height;
  j["objects"] = ordered_json::array();
  for (const auto& o : g.objects) {
    j["objects"].push_back({{"id", o.key()}, {"category", o.category}, {"bbox", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}}});
  }
  j["relations"] = ordered_json::array();
  for (const auto& r : g.relations) {
    j["relations"].push_back({{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}, {"type", r.rel_type}});
  }
  return j;
}

DatasetProfile profile_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "profile must be a JSON object");
  try {
    DatasetProfile::Spec spec;
    if (auto it = j.find("name"); it != j.end() && it->is_string()) spec.name = it->get<std::string>();
    spec.categories = string_list(j, "categories");
    spec.predicates = string_list(j, "predicates");
    spec.relation_types = string_list(j, "relation_types");
    const auto& tax = field(j, "taxonomy");
    if (!tax.is_object()) bad("'taxonomy' must map relation types to predicate lists");
    for (const auto& [type, preds] : tax.items()) {
      if (!preds.is_array()) bad("taxonomy entries must be arrays");
      for (const auto& p : preds) {
        if (!p.is_string()) bad("taxonomy entries must be strings");
        if (!spec.taxonomy.emplace(p.get<std::string>(), type).second) {
          bad("predicate '" + p.get<std::string>() + "' appears in more than one taxonomy type");
        }
      }
    }
    if (auto it = j.find("predicate_counts"); it != j.end()) {
      if (!it->is_object()) bad("'predicate_counts' must be an object");
      for (const auto& [p, c] : it->items()) {
        if (!c.is_number()) bad("predicate count must be numeric");
        spec.predicate_freq[p] = c.get<double>();
      }
    }
    if (auto it = j.find("train_triplets"); it != j.end()) {
      if (!it->is_array()) bad("'train_triplets' must be an array");
      for (const auto& t : *it) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() || !t[2].is_string()) {
          bad("train triplets must be [subject, predicate, object] string triples");
        }
        spec.train_triplets.emplace(t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>());
      }
    }
    return DatasetProfile(std::move(spec));
  } catch (const Error& e) {
    if (e.code == ErrorCode::InvalidInput) throw Error(ErrorCode::InvalidConfig, e.what());
    throw;
  }
}

ordered_json profile_to_json(const DatasetProfile& p) {
  ordered_json j;
  j["name"] = p.name();
  j["categories"] = p.categories();
  j["predicates"] = p.predicates();
  j["relation_types"] = p.relation_types();
  ordered_json tax = ordered_json::object();
  for (const auto& t : p.relation_types()) tax[t] = ordered_json::array();
  for (const auto& pred : p.predicates()) tax[*p.type_of(pred)].push_back(pred);
  j["taxonomy"] = tax;
  ordered_json counts = ordered_json::object();
  for (const auto& [pred, f] : p.raw_frequencies()) counts[pred] = f;
  j["predicate_counts"] = counts;
  j["train_triplets"] = ordered_json::array();
  for (const auto& [s, pr, o] : p.train_triplets()) j["train_triplets"].push_back({s, pr, o});
  return j;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DatasetProfile load_profile(const std::filesystem::path& path) {
  auto doc = json::parse(read_text(path), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::InvalidConfig, "profile '" + path.string() + "' is not valid JSON");
  return profile_from_json(doc);
}

void for_each_json_line(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      throw Error(ErrorCode::InvalidInput, path.filename().string() + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    fn(doc, lineno);
  }
}

void write_json_lines(const std::filesystem::path& path, const std::vector<ordered_json>& docs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  for (const auto& d : docs) out << d.dump() << '\n';
}

void write_json(const std::filesystem::path& path, const ordered_json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace sggr
