#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace curio {

/// Raised when a scene or schema violates one of its structural invariants.
class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Attribute vocabulary shared by every scene of an experiment.
///
/// `concepts` fixes the slot order used everywhere (memory, policy input,
/// vision heads). `description_order` lists concept indices in the order
/// their adjectives are spoken and their filters are applied, innermost
/// first; the last entry is the noun ("cube", "thing").
struct AttributeSchema {
  std::string name;
  std::vector<std::string> concepts;
  std::vector<std::vector<std::string>> values;
  std::vector<std::size_t> description_order;

  std::size_t num_concepts() const { return concepts.size(); }
  std::size_t num_values(std::size_t concept_index) const { return values.at(concept_index).size(); }
  std::size_t total_values() const;

  /// Index of `concept_name`, or nullopt.
  std::optional<std::size_t> concept_index(std::string_view concept_name) const;
  std::optional<std::size_t> value_index(std::size_t concept_index, std::string_view value) const;

  /// Throws SceneError if any invariant is broken.
  void validate() const;

  bool operator==(const AttributeSchema&) const = default;
};

/// 3 shapes, 6 colors, 2 materials, 2 sizes.
AttributeSchema standard_schema();
/// Novel shapes and colors; materials and sizes shared with standard.
AttributeSchema novel_schema();
/// Union of standard and novel values.
AttributeSchema mixed_schema();
/// Object category, color and material vocabulary of the indoor robot set.
AttributeSchema arid_schema();
/// Looks up one of "standard", "novel", "mixed", "arid".
AttributeSchema schema_by_name(std::string_view name);

/// Axis-aligned box in unit-square image coordinates; (x, y) is the top-left corner.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double center_x() const { return x + 0.5 * w; }
  double center_y() const { return y + 0.5 * h; }

  bool operator==(const Box&) const = default;
};

struct SceneObject {
  Box location;
  /// One value index per schema concept.
  std::vector<int> attributes;

  bool operator==(const SceneObject&) const = default;
};

/// Ground-truth scene graph; doubles as the oracle graph.
struct Scene {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  std::shared_ptr<const AttributeSchema> schema;
  std::vector<SceneObject> objects;

  std::size_t size() const { return objects.size(); }
  const SceneObject& object(std::size_t k) const { return objects.at(k); }
  int value(std::size_t k, std::size_t concept_index) const {
    return objects.at(k).attributes.at(concept_index);
  }

  /// Throws SceneError on out-of-range values or geometric ties.
  void validate(double min_sep = 0.0) const;

  friend bool operator==(const Scene& a, const Scene& b);
};

struct SceneGenParams {
  std::size_t min_objects = 5;
  std::size_t max_objects = 10;
  double min_sep = 0.02;
  double min_box = 0.05;
  double max_box = 0.15;
  int max_attempts = 1000;
};

/// Deterministic in `seed`: object count uniform in [min, max], attribute
/// values uniform, centers separated by at least `min_sep` on both axes.
Scene generate_scene(std::shared_ptr<const AttributeSchema> schema, const SceneGenParams& params,
                     std::uint64_t seed, std::uint64_t scene_id = 0);

enum class Relation { kLeft, kRight, kFront, kBehind };

std::string_view to_string(Relation r);
std::optional<Relation> relation_from_string(std::string_view s);

/// How `a` stands relative to `b` on each axis. Larger y is nearer the camera.
struct SpatialRelation {
  Relation horizontal;  // kLeft or kRight
  Relation depth;       // kFront or kBehind
};

SpatialRelation spatial_relation(const SceneObject& a, const SceneObject& b);

/// True iff `a` stands in relation `r` to `b`.
bool satisfies(const SceneObject& a, Relation r, const SceneObject& b);

enum class Position { kLeftMost, kRightMost, kClosest, kFarthest, kNone };

std::string_view to_string(Position p);
std::optional<Position> position_from_string(std::string_view s);

/// True iff object k is the raw extreme `p` of the scene (ignores priority).
bool is_extreme(std::span<const SceneObject> objects, std::size_t k, Position p);

/// First applicable extreme in priority order left-most, right-most,
/// closest, farthest; kNone for interior objects.
Position extremal_position(std::span<const SceneObject> objects, std::size_t k);
Position extremal_position(const Scene& scene, std::size_t k);

double center_distance(const SceneObject& a, const SceneObject& b);

// Structured-text (JSON) persistence.

std::string schema_to_json(const AttributeSchema& schema);
AttributeSchema schema_from_json(std::string_view text);

std::string serialize_scene(const Scene& scene);
Scene parse_scene(std::string_view text, std::shared_ptr<const AttributeSchema> schema);

/// A named collection of scenes sharing one schema, with train/val/test
/// splits and fixed-size evaluation folds over the test split.
struct Dataset {
  std::shared_ptr<const AttributeSchema> schema;
  std::vector<Scene> scenes;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
  std::size_t test_count = 0;
  std::size_t fold_size = 50;

  std::span<const Scene> train() const;
  std::span<const Scene> val() const;
  std::span<const Scene> test() const;
  /// Test split cut into consecutive folds of `fold_size` (last partial fold dropped
  /// unless it is the only one).
  std::vector<std::span<const Scene>> test_folds() const;
};

/// Generates `count` scenes split 1/2, 1/6, 1/3 (900/300/600 for 1800).
Dataset generate_dataset(const AttributeSchema& schema, std::size_t count, std::uint64_t seed,
                         const SceneGenParams& params = {});

std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::string_view text);
void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace curio
