#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace sggr {

/// Axis-aligned box in absolute pixel coordinates, corner-pair convention.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  /// Finite, non-negative, strictly positive area.
  bool well_formed() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Overshoot beyond the image frame that is silently clamped.
inline constexpr double kClampTolerancePx = 2.0;

/// Clamps a box into [0,width]x[0,height] if it overshoots by at most
/// kClampTolerancePx on every side. Returns nullopt when the overshoot is larger
/// or the clamped box degenerates.
std::optional<BoundingBox> clamp_to_frame(const BoundingBox& box, double width, double height);

struct InstanceKey {
  std::string category;
  int index = 0;

  std::string str() const;
  friend auto operator<=>(const InstanceKey&, const InstanceKey&) = default;
};

/// Splits "person.2" into {"person", 2}. The suffix is taken after the last '.', must be a
/// positive decimal integer, and the category part must be non-empty.
std::optional<InstanceKey> parse_instance_key(std::string_view key);

struct ObjectInstance {
  std::string category;
  int index = 1;
  BoundingBox box;

  std::string key() const { return InstanceKey{category, index}.str(); }
  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

struct RelationTriplet {
  std::string subject;  // instance key
  std::string predicate;
  std::string object;  // instance key
  std::string rel_type;

  friend bool operator==(const RelationTriplet&, const RelationTriplet&) = default;
};

struct SceneGraph {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<ObjectInstance> objects;
  std::vector<RelationTriplet> relations;

  /// Position of the instance with the given key, or nullopt.
  std::optional<std::size_t> find_object(std::string_view key) const;

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

/// Compares two graphs as sets: objects keyed by instance key, relations as
/// (subject, predicate, object, type) sets. Ordering of either list is ignored.
bool same_graph(const SceneGraph& a, const SceneGraph& b);

using ClassTriple = std::tuple<std::string, std::string, std::string>;

/// Closed vocabularies and training statistics of one dataset.
class DatasetProfile {
 public:
  struct Spec {
    std::string name;
    std::vector<std::string> categories;
    std::vector<std::string> predicates;
    /// Ordered taxonomy types, e.g. {"spatial","possessive","interactive"}.
    std::vector<std::string> relation_types;
    std::map<std::string, std::string> taxonomy;  // predicate -> relation type
    /// Raw training counts or frequencies; normalized over observed predicates.
    std::map<std::string, double> predicate_freq;
    std::set<ClassTriple> train_triplets;
  };

  DatasetProfile() = default;
  /// Validates the spec and applies frequency smoothing. Throws Error(InvalidConfig).
  explicit DatasetProfile(Spec spec);

  const std::string& name() const { return spec_.name; }
  const std::vector<std::string>& categories() const { return spec_.categories; }
  const std::vector<std::string>& predicates() const { return spec_.predicates; }
  const std::vector<std::string>& relation_types() const { return spec_.relation_types; }
  const std::set<ClassTriple>& train_triplets() const { return spec_.train_triplets; }
  const std::map<std::string, double>& raw_frequencies() const { return spec_.predicate_freq; }

  bool has_category(std::string_view c) const;
  bool has_predicate(std::string_view p) const;
  bool has_relation_type(std::string_view t) const;

  /// Taxonomy type of a predicate; nullopt if the predicate is unknown.
  std::optional<std::string> type_of(std::string_view predicate) const;
  /// Smoothed relative frequency: unseen predicates get the smallest observed frequency.
  std::optional<double> frequency(std::string_view predicate) const;
  double f_max() const { return f_max_; }
  double f_min() const { return f_min_; }

  bool is_seen_triplet(const ClassTriple& t) const { return spec_.train_triplets.contains(t); }

 private:
  Spec spec_;
  std::set<std::string, std::less<>> category_set_;
  std::map<std::string, std::string, std::less<>> taxonomy_;
  std::map<std::string, double, std::less<>> smoothed_;
  double f_max_ = 1.0;
  double f_min_ = 1.0;
};

enum class ViolationScope { Graph = 0, Object = 1, Relation = 2 };

struct Violation {
  ViolationScope scope = ViolationScope::Graph;
  std::size_t index = 0;  // position within objects or relations
  std::string code;       // e.g. "DANGLING_INSTANCE"
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Every invariant violation of `graph` against `profile`, sorted by (scope, index, code).
std::vector<Violation> validate_graph(const SceneGraph& graph, const DatasetProfile& profile);

/// Applies the clamp policy to every box. Boxes that cannot be clamped are left untouched
/// so that validate_graph reports them.
void clamp_boxes(SceneGraph& graph);

/// "person wearing shirt" from ("person.2","wearing","shirt.1"). Throws Error(KeyFormat).
std::string canonical_key(std::string_view subject, std::string_view predicate, std::string_view object);

/// Lowercased, whitespace-normalized token used as an embedding key for categories and predicates.
std::string canonical_token(std::string_view token);

}  // namespace sggr
