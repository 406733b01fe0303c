#pragma once

// Three-stage tagged completions:
//   <CATEGORY>["person","dog"]</CATEGORY>
//   <OBJECT>[{"id":"person.1","bbox":[x1,y1,x2,y2]}, ...]</OBJECT>
//   <RELATION>{"spatial":[["person.1","near","dog.1"]], "possessive":[], "interactive":[]}</RELATION>
// Text outside the tag pairs is ignored.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sggr/graph.hpp"

namespace sggr {

enum class Stage { Category = 0, Object = 1, Relation = 2 };

struct ImageSize {
  int width = 0;
  int height = 0;
};

struct ParsedCompletion {
  std::optional<std::vector<std::string>> category_stage;
  std::optional<std::vector<ObjectInstance>> object_stage;
  std::optional<std::map<std::string, std::vector<RelationTriplet>>> relation_stage;
  std::array<bool, 3> stage_valid{false, false, false};
  /// Why each invalid stage was rejected; empty for valid stages.
  std::array<std::string, 3> stage_error;
  std::optional<SceneGraph> graph;

  bool valid(Stage s) const { return stage_valid[static_cast<int>(s)]; }
  int valid_stage_count() const;
};

/// Never throws on malformed text. With `frame` given, boxes are clamped to the image and
/// boxes beyond the clamp tolerance invalidate the object stage; the assembled graph then
/// carries the frame dimensions.
ParsedCompletion parse_completion(std::string_view text, const DatasetProfile& profile,
                                  std::optional<ImageSize> frame = std::nullopt, std::string image_id = {});

/// Valid stages / 3.
double format_reward(const ParsedCompletion& parsed);

struct CotRecord {
  std::string prompt_ref;
  std::string response_text;
};

/// Renders a ground-truth graph as a three-stage completion. Instances are renumbered
/// per category in annotation order. Throws Error(SerializeInvalidGraph).
CotRecord serialize_cot(const SceneGraph& graph, const DatasetProfile& profile);

/// The graph as serialize_cot renders it: objects grouped by first-appearance category order,
/// renumbered, relations remapped and ordered by type then subject/object position.
SceneGraph canonicalize_for_cot(const SceneGraph& graph, const DatasetProfile& profile);

/// Fraction of completions without an assembled graph. Throws Error(EmptyBatch).
double failure_rate(std::span<const ParsedCompletion> results);

}  // namespace sggr
