#include "sggr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sggr/error.hpp"

namespace sggr {

void FilterConfig::validate() const {
  if (!(theta >= 0 && theta <= 1)) throw Error(ErrorCode::InvalidConfig, "theta must lie in [0,1]");
}

CandidateCheck validate_candidate(const CandidateTriplet& c, const SceneGraph& gt, const DatasetProfile& profile) {
  if (c.image_id != gt.image_id) return {false, "IMAGE_MISMATCH"};
  if (!parse_instance_key(c.subject) || !parse_instance_key(c.object)) return {false, "KEY_FORMAT"};
  if (!gt.find_object(c.subject) || !gt.find_object(c.object)) return {false, "DANGLING_INSTANCE"};
  if (!profile.has_predicate(c.predicate)) return {false, "UNKNOWN_PREDICATE"};
  if (c.subject == c.object) return {false, "SELF_RELATION"};
  for (const auto& r : gt.relations) {
    if (r.subject == c.subject && r.predicate == c.predicate && r.object == c.object) return {false, "DUPLICATE"};
  }
  return {true, {}};
}

FilterResult filter_candidates(std::span<const CandidateTriplet> candidates, const SceneGraph& gt,
                               const DatasetProfile& profile, const FilterConfig& cfg, EmbeddingStore& store) {
  cfg.validate();
  std::vector<CandidateTriplet> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());

  std::vector<EmbeddingVector> anchors;
  if (!gt.relations.empty()) {
    std::vector<std::string> keys;
    for (const auto& r : gt.relations) keys.push_back(canonical_key(r.subject, r.predicate, r.object));
    anchors = store.embed_many(keys);
  }

  FilterResult out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& c : sorted) {
    const auto check = validate_candidate(c, gt, profile);
    if (!check.ok) {
      out.dropped.push_back({c, check.reason, std::nullopt});
      continue;
    }
    if (!seen.emplace(c.subject, c.predicate, c.object).second) {
      out.dropped.push_back({c, "DUPLICATE_CANDIDATE", std::nullopt});
      continue;
    }
    if (anchors.empty()) {
      out.dropped.push_back({c, "NO_GT_ANCHOR", std::nullopt});
      continue;
    }
    const auto e = store.embed(canonical_key(c.subject, c.predicate, c.object));
    double best = 0.0;
    for (const auto& a : anchors) best = std::max(best, reward_sim(e, a));
    if (best >= cfg.theta) {
      out.retained.push_back(c);
    } else {
      out.dropped.push_back({c, "BELOW_THRESHOLD", best});
    }
  }
  return out;
}

SceneGraph merge_candidates(const SceneGraph& gt, std::span<const CandidateTriplet> retained,
                            const DatasetProfile& profile) {
  SceneGraph merged = gt;
  for (const auto& c : retained) {
    auto type = profile.type_of(c.predicate);
    if (!type) throw Error(ErrorCode::UnknownPredicate, "'" + c.predicate + "' is not in the profile");
    merged.relations.push_back({c.subject, c.predicate, c.object, *type});
  }
  return merged;
}

CotRecord build_sft_record(const SceneGraph& gt, std::span<const CandidateTriplet> retained,
                           const DatasetProfile& profile) {
  return serialize_cot(merge_candidates(gt, retained, profile), profile);
}

CorpusStats corpus_stats(std::span<const SceneGraph> graphs, const DatasetProfile& profile,
                         const PartitionSpec& partition) {
  (void)profile;
  if (graphs.empty()) throw Error(ErrorCode::EmptyBatch, "corpus is empty");
  CorpusStats s;
  s.images = graphs.size();
  std::set<ClassTriple> all_types;
  std::map<std::string, std::set<ClassTriple>> group_types;
  for (const auto& name : {"head", "body", "tail"}) s.groups[name] = {};
  for (const auto& g : graphs) {
    s.objects += g.objects.size();
    for (const auto& r : g.relations) {
      ++s.relations;
      auto so = g.find_object(r.subject);
      auto oo = g.find_object(r.object);
      const ClassTriple t{so ? g.objects[*so].category : r.subject, r.predicate, oo ? g.objects[*oo].category : r.object};
      all_types.insert(t);
      if (auto group = partition.group_of(r.predicate); !group.empty()) {
        ++s.groups[group].count;
        group_types[group].insert(t);
      }
    }
  }
  s.triplet_types = all_types.size();
  s.objects_per_image = static_cast<double>(s.objects) / static_cast<double>(s.images);
  s.relations_per_image = static_cast<double>(s.relations) / static_cast<double>(s.images);
  for (auto& [name, gs] : s.groups) {
    gs.types = group_types[name].size();
    gs.share = s.relations == 0 ? 0.0 : static_cast<double>(gs.count) / static_cast<double>(s.relations);
  }
  return s;
}

ordered_json candidate_to_json(const CandidateTriplet& c) {
  return {{"image_id", c.image_id}, {"subject", c.subject}, {"predicate", c.predicate}, {"object", c.object},
          {"provenance", c.provenance}};
}

CandidateTriplet candidate_from_json(const json& j) {
  auto str = [&](const char* k) {
    if (!j.is_object() || !j.contains(k) || !j[k].is_string()) {
      throw Error(ErrorCode::InvalidInput, std::string("candidate needs string field '") + k + "'");
    }
    return j[k].get<std::string>();
  };
  CandidateTriplet c{str("image_id"), str("subject"), str("predicate"), str("object")};
  if (j.contains("provenance")) {
    c.provenance = str("provenance");
    if (c.provenance != "original" && c.provenance != "augmented") {
      throw Error(ErrorCode::InvalidInput, "provenance must be 'original' or 'augmented'");
    }
  }
  return c;
}

ordered_json drop_entry_to_json(const DropEntry& d) {
  ordered_json j = candidate_to_json(d.candidate);
  j["reason"] = d.reason;
  j["max_similarity"] = d.max_similarity ? ordered_json(*d.max_similarity) : ordered_json(nullptr);
  return j;
}

ordered_json corpus_stats_to_json(const CorpusStats& s) {
  ordered_json j;
  j["images"] = s.images;
  j["objects"] = s.objects;
  j["relations"] = s.relations;
  j["triplet_types"] = s.triplet_types;
  j["objects_per_image"] = s.objects_per_image;
  j["relations_per_image"] = s.relations_per_image;
  ordered_json groups = ordered_json::object();
  for (const auto& name : {"head", "body", "tail"}) {
    const auto& g = s.groups.at(name);
    groups[name] = {{"count", g.count}, {"types", g.types}, {"share", g.share}};
  }
  j["groups"] = groups;
  return j;
}

}  // namespace sggr
