#pragma once

// JSON encodings of the on-disk formats: ground-truth scene graph lines and dataset profiles.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sggr/graph.hpp"

namespace sggr {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// {"image_id","width","height","objects":[{"id","category","bbox"}],"relations":[{"subject","predicate","object","type"}]}
/// A missing relation "type" is filled from the profile taxonomy when one is given.
/// Throws Error(InvalidInput) on schema violations.
SceneGraph scene_graph_from_json(const json& j, const DatasetProfile* profile = nullptr);
ordered_json scene_graph_to_json(const SceneGraph& g);

/// Profile document:
///   {"name", "categories":[...], "predicates":[...], "relation_types":[t1,t2,t3],
///    "taxonomy":{t1:[predicates...], ...}, "predicate_counts":{p:count},
///    "train_triplets":[[subject_class, predicate, object_class], ...]}
DatasetProfile profile_from_json(const json& j);
ordered_json profile_to_json(const DatasetProfile& p);

DatasetProfile load_profile(const std::filesystem::path& path);

/// Reads a line-delimited JSON file, skipping blank lines. The callback receives the parsed
/// document and its 1-based line number. Throws Error(Io) / Error(InvalidInput).
void for_each_json_line(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn);

void write_json_lines(const std::filesystem::path& path, const std::vector<ordered_json>& docs);
void write_json(const std::filesystem::path& path, const ordered_json& doc);
std::string read_text(const std::filesystem::path& path);

}  // namespace sggr
