#include "curio/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "curio/random.hpp"
#include "json.hpp"

namespace curio {

using nlohmann::json;

std::size_t AttributeSchema::total_values() const {
  std::size_t n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

std::optional<std::size_t> AttributeSchema::concept_index(std::string_view concept_name) const {
  for (std::size_t a = 0; a < concepts.size(); ++a)
    if (concepts[a] == concept_name) return a;
  return std::nullopt;
}

std::optional<std::size_t> AttributeSchema::value_index(std::size_t concept_idx,
                                                        std::string_view value) const {
  const auto& vs = values.at(concept_idx);
  for (std::size_t i = 0; i < vs.size(); ++i)
    if (vs[i] == value) return i;
  return std::nullopt;
}

void AttributeSchema::validate() const {
  if (concepts.empty()) throw SceneError("schema '" + name + "' has no concepts");
  if (values.size() != concepts.size())
    throw SceneError("schema '" + name + "': value lists do not match concepts");
  std::set<std::string> seen_concepts;
  for (std::size_t a = 0; a < concepts.size(); ++a) {
    if (!seen_concepts.insert(concepts[a]).second)
      throw SceneError("schema '" + name + "': duplicate concept " + concepts[a]);
    if (values[a].size() < 2)
      throw SceneError("schema '" + name + "': concept " + concepts[a] + " needs at least 2 values");
    std::set<std::string> seen(values[a].begin(), values[a].end());
    if (seen.size() != values[a].size())
      throw SceneError("schema '" + name + "': duplicate value in concept " + concepts[a]);
  }
  std::vector<std::size_t> order = description_order;
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order.size() != concepts.size() || order[i] != i)
      throw SceneError("schema '" + name + "': description_order is not a permutation of concepts");
}

namespace {

AttributeSchema clevr_like(std::string name, std::vector<std::string> shapes,
                           std::vector<std::string> colors) {
  AttributeSchema s;
  s.name = std::move(name);
  s.concepts = {"shape", "color", "material", "size"};
  s.values = {std::move(shapes), std::move(colors), {"rubber", "metal"}, {"large", "small"}};
  // size, color, material, shape: "the large red metal cube"
  s.description_order = {3, 1, 2, 0};
  return s;
}

}  // namespace

AttributeSchema standard_schema() {
  return clevr_like("standard", {"cube", "sphere", "cylinder"},
                    {"gray", "red", "blue", "green", "yellow", "purple"});
}

AttributeSchema novel_schema() {
  return clevr_like("novel", {"cuboid", "bowl", "cone"}, {"pink", "brown", "cyan", "orange"});
}

AttributeSchema mixed_schema() {
  return clevr_like("mixed", {"cube", "sphere", "cylinder", "cuboid", "bowl", "cone"},
                    {"gray", "red", "blue", "green", "yellow", "purple", "pink", "brown", "cyan",
                     "orange"});
}

AttributeSchema arid_schema() {
  AttributeSchema s;
  s.name = "arid";
  s.concepts = {"object", "color", "material"};
  s.values = {
      {"lightbulb", "apple",  "bell",     "calculator", "sponge",     "keyboard", "marker",
       "scissors",  "glue",   "lime",     "flashlight", "cell",       "lemon",    "instant",
       "peach",     "toothpaste", "bowl", "rubber",     "camera",     "orange",   "banana",
       "plate",     "coffee", "ball",     "mushroom",   "food",       "pear",     "pitcher",
       "dry",       "kleenex", "toothbrush", "binder",  "notebook",   "garlic",   "cereal",
       "pliers",    "comb",   "tomato",   "water",      "stapler",    "onion",    "greens",
       "potato",    "cap",    "shampoo",  "hand",       "soda"},
      {"blue", "brown", "purple", "grey", "yellow", "mixed", "pink", "green", "orange", "black",
       "white", "silver", "red"},
      {"cloth", "food", "metal", "plastic", "glass", "paper"}};
  s.description_order = {1, 2, 0};
  return s;
}

AttributeSchema schema_by_name(std::string_view name) {
  if (name == "standard") return standard_schema();
  if (name == "novel") return novel_schema();
  if (name == "mixed") return mixed_schema();
  if (name == "arid") return arid_schema();
  throw SceneError("unknown schema '" + std::string(name) + "'");
}

void Scene::validate(double min_sep) const {
  if (!schema) throw SceneError("scene has no schema");
  for (const auto& o : objects) {
    const Box& b = o.location;
    if (!(b.x >= 0.0 && b.x <= 1.0 && b.y >= 0.0 && b.y <= 1.0))
      throw SceneError("object box corner outside the unit square");
    if (!(b.w > 0.0 && b.h > 0.0)) throw SceneError("object box has non-positive extent");
    if (o.attributes.size() != schema->num_concepts())
      throw SceneError("object attribute count does not match schema");
    for (std::size_t a = 0; a < o.attributes.size(); ++a)
      if (o.attributes[a] < 0 || static_cast<std::size_t>(o.attributes[a]) >= schema->num_values(a))
        throw SceneError("object attribute value out of range");
  }
  for (std::size_t i = 0; i < objects.size(); ++i)
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      const Box& a = objects[i].location;
      const Box& b = objects[j].location;
      if (std::abs(a.center_x() - b.center_x()) <= min_sep ||
          std::abs(a.center_y() - b.center_y()) <= min_sep)
        throw SceneError("object centers too close on an axis");
    }
}

bool operator==(const Scene& a, const Scene& b) {
  if (a.id != b.id || a.seed != b.seed || a.objects != b.objects) return false;
  if (a.schema == b.schema) return true;
  return a.schema && b.schema && *a.schema == *b.schema;
}

Scene generate_scene(std::shared_ptr<const AttributeSchema> schema, const SceneGenParams& params,
                     std::uint64_t seed, std::uint64_t scene_id) {
  if (!schema) throw SceneError("generate_scene: null schema");
  if (params.min_objects < 1 || params.max_objects < params.min_objects)
    throw SceneError("generate_scene: invalid object count range");
  if (!(params.min_sep > 0.0)) throw SceneError("generate_scene: min_sep must be positive");
  if (!(params.min_box > 0.0 && params.max_box >= params.min_box && params.max_box < 1.0))
    throw SceneError("generate_scene: invalid box size range");

  Rng rng(seed);
  const std::size_t count =
      params.min_objects +
      uniform_index(rng, params.max_objects - params.min_objects + 1);

  Scene scene;
  scene.id = scene_id;
  scene.seed = seed;
  scene.schema = schema;
  scene.objects.reserve(count);

  std::uniform_real_distribution<double> size_dist(params.min_box, params.max_box);
  for (std::size_t k = 0; k < count; ++k) {
    SceneObject obj;
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt >= params.max_attempts)
        throw SceneError("generate_scene: min_sep infeasible after bounded rejection attempts");
      const double w = size_dist(rng);
      const double h = size_dist(rng);
      const double x = uniform01(rng) * (1.0 - w);
      const double y = uniform01(rng) * (1.0 - h);
      obj.location = Box{x, y, w, h};
      const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
        return std::abs(o.location.center_x() - obj.location.center_x()) > params.min_sep &&
               std::abs(o.location.center_y() - obj.location.center_y()) > params.min_sep;
      });
      if (clear) break;
    }
    obj.attributes.resize(schema->num_concepts());
    for (std::size_t a = 0; a < schema->num_concepts(); ++a)
      obj.attributes[a] = static_cast<int>(uniform_index(rng, schema->num_values(a)));
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::kLeft: return "left";
    case Relation::kRight: return "right";
    case Relation::kFront: return "front";
    case Relation::kBehind: return "behind";
  }
  return "?";
}

std::optional<Relation> relation_from_string(std::string_view s) {
  if (s == "left") return Relation::kLeft;
  if (s == "right") return Relation::kRight;
  if (s == "front") return Relation::kFront;
  if (s == "behind") return Relation::kBehind;
  return std::nullopt;
}

SpatialRelation spatial_relation(const SceneObject& a, const SceneObject& b) {
  const double ax = a.location.center_x(), bx = b.location.center_x();
  const double ay = a.location.center_y(), by = b.location.center_y();
  if (ax == bx || ay == by) throw SceneError("spatial_relation: centers tie on an axis");
  return {ax < bx ? Relation::kLeft : Relation::kRight,
          ay > by ? Relation::kFront : Relation::kBehind};
}

bool satisfies(const SceneObject& a, Relation r, const SceneObject& b) {
  switch (r) {
    case Relation::kLeft: return a.location.center_x() < b.location.center_x();
    case Relation::kRight: return a.location.center_x() > b.location.center_x();
    case Relation::kFront: return a.location.center_y() > b.location.center_y();
    case Relation::kBehind: return a.location.center_y() < b.location.center_y();
  }
  return false;
}

std::string_view to_string(Position p) {
  switch (p) {
    case Position::kLeftMost: return "left-most";
    case Position::kRightMost: return "right-most";
    case Position::kClosest: return "closest";
    case Position::kFarthest: return "farthest";
    case Position::kNone: return "none";
  }
  return "?";
}

std::optional<Position> position_from_string(std::string_view s) {
  if (s == "left-most") return Position::kLeftMost;
  if (s == "right-most") return Position::kRightMost;
  if (s == "closest") return Position::kClosest;
  if (s == "farthest") return Position::kFarthest;
  if (s == "none") return Position::kNone;
  return std::nullopt;
}

bool is_extreme(std::span<const SceneObject> objects, std::size_t k, Position p) {
  const SceneObject& o = objects[k];
  for (std::size_t j = 0; j < objects.size(); ++j) {
    if (j == k) continue;
    const SceneObject& other = objects[j];
    switch (p) {
      case Position::kLeftMost:
        if (other.location.center_x() <= o.location.center_x()) return false;
        break;
      case Position::kRightMost:
        if (other.location.center_x() >= o.location.center_x()) return false;
        break;
      case Position::kClosest:
        if (other.location.center_y() >= o.location.center_y()) return false;
        break;
      case Position::kFarthest:
        if (other.location.center_y() <= o.location.center_y()) return false;
        break;
      case Position::kNone:
        return false;
    }
  }
  return p != Position::kNone;
}

Position extremal_position(std::span<const SceneObject> objects, std::size_t k) {
  if (k >= objects.size()) throw SceneError("extremal_position: object index out of range");
  for (Position p : {Position::kLeftMost, Position::kRightMost, Position::kClosest, Position::kFarthest})
    if (is_extreme(objects, k, p)) return p;
  return Position::kNone;
}

Position extremal_position(const Scene& scene, std::size_t k) {
  return extremal_position(std::span<const SceneObject>(scene.objects), k);
}

double center_distance(const SceneObject& a, const SceneObject& b) {
  return std::hypot(a.location.center_x() - b.location.center_x(),
                    a.location.center_y() - b.location.center_y());
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json schema_json(const AttributeSchema& s) {
  json j;
  j["name"] = s.name;
  j["concepts"] = s.concepts;
  j["values"] = s.values;
  j["description_order"] = s.description_order;
  return j;
}

AttributeSchema schema_of(const json& j) {
  AttributeSchema s;
  s.name = j.at("name").get<std::string>();
  s.concepts = j.at("concepts").get<std::vector<std::string>>();
  s.values = j.at("values").get<std::vector<std::vector<std::string>>>();
  s.description_order = j.at("description_order").get<std::vector<std::size_t>>();
  s.validate();
  return s;
}

json scene_json(const Scene& scene) {
  const AttributeSchema& s = *scene.schema;
  json objs = json::array();
  for (const auto& o : scene.objects) {
    json jo;
    const Box& b = o.location;
    jo["box"] = {b.x, b.y, b.w, b.h};
    json attrs = json::object();
    for (std::size_t a = 0; a < s.num_concepts(); ++a)
      attrs[s.concepts[a]] = s.values[a].at(static_cast<std::size_t>(o.attributes[a]));
    jo["attributes"] = std::move(attrs);
    objs.push_back(std::move(jo));
  }
  json j;
  j["id"] = scene.id;
  j["seed"] = scene.seed;
  j["objects"] = std::move(objs);
  return j;
}

Scene scene_of(const json& j, std::shared_ptr<const AttributeSchema> schema) {
  Scene scene;
  scene.schema = schema;
  scene.id = j.at("id").get<std::uint64_t>();
  scene.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    const auto box = jo.at("box").get<std::vector<double>>();
    if (box.size() != 4) throw SceneError("scene object box must have 4 numbers");
    o.location = Box{box[0], box[1], box[2], box[3]};
    const json& attrs = jo.at("attributes");
    o.attributes.resize(schema->num_concepts());
    for (std::size_t a = 0; a < schema->num_concepts(); ++a) {
      const auto value = attrs.at(schema->concepts[a]).get<std::string>();
      auto idx = schema->value_index(a, value);
      if (!idx) throw SceneError("unknown value '" + value + "' for concept " + schema->concepts[a]);
      o.attributes[a] = static_cast<int>(*idx);
    }
    scene.objects.push_back(std::move(o));
  }
  scene.validate();
  return scene;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SceneError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

std::string schema_to_json(const AttributeSchema& schema) { return schema_json(schema).dump(); }

AttributeSchema schema_from_json(std::string_view text) {
  try {
    return schema_of(parse_json(text));
  } catch (const json::exception& e) {
    throw SceneError(std::string("bad schema: ") + e.what());
  }
}

std::string serialize_scene(const Scene& scene) { return scene_json(scene).dump(); }

Scene parse_scene(std::string_view text, std::shared_ptr<const AttributeSchema> schema) {
  try {
    return scene_of(parse_json(text), std::move(schema));
  } catch (const json::exception& e) {
    throw SceneError(std::string("bad scene: ") + e.what());
  }
}

std::span<const Scene> Dataset::train() const {
  return std::span<const Scene>(scenes).subspan(0, train_count);
}

std::span<const Scene> Dataset::val() const {
  return std::span<const Scene>(scenes).subspan(train_count, val_count);
}

std::span<const Scene> Dataset::test() const {
  return std::span<const Scene>(scenes).subspan(train_count + val_count, test_count);
}

std::vector<std::span<const Scene>> Dataset::test_folds() const {
  std::vector<std::span<const Scene>> folds;
  auto t = test();
  if (fold_size == 0 || t.empty()) return folds;
  for (std::size_t start = 0; start + fold_size <= t.size(); start += fold_size)
    folds.push_back(t.subspan(start, fold_size));
  if (folds.empty()) folds.push_back(t);
  return folds;
}

Dataset generate_dataset(const AttributeSchema& schema, std::size_t count, std::uint64_t seed,
                         const SceneGenParams& params) {
  schema.validate();
  Dataset ds;
  ds.schema = std::make_shared<const AttributeSchema>(schema);
  ds.scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    ds.scenes.push_back(generate_scene(ds.schema, params, derive_seed(seed, {i}), i));
  ds.train_count = count / 2;
  ds.val_count = count / 6;
  ds.test_count = count - ds.train_count - ds.val_count;
  return ds;
}

std::string serialize_dataset(const Dataset& dataset) {
  json j;
  j["format"] = "curio-scenes/1";
  j["schema"] = schema_json(*dataset.schema);
  j["splits"] = {{"train", dataset.train_count}, {"val", dataset.val_count}, {"test", dataset.test_count}};
  j["fold_size"] = dataset.fold_size;
  json scenes = json::array();
  for (const auto& s : dataset.scenes) scenes.push_back(scene_json(s));
  j["scenes"] = std::move(scenes);
  return j.dump(1);
}

Dataset parse_dataset(std::string_view text) {
  try {
    const json j = parse_json(text);
    Dataset ds;
    ds.schema = std::make_shared<const AttributeSchema>(schema_of(j.at("schema")));
    for (const auto& js : j.at("scenes")) ds.scenes.push_back(scene_of(js, ds.schema));
    const json& splits = j.at("splits");
    ds.train_count = splits.at("train").get<std::size_t>();
    ds.val_count = splits.at("val").get<std::size_t>();
    ds.test_count = splits.at("test").get<std::size_t>();
    ds.fold_size = j.value("fold_size", std::size_t{50});
    if (ds.train_count + ds.val_count + ds.test_count != ds.scenes.size())
      throw SceneError("dataset split sizes do not add up to the scene count");
    return ds;
  } catch (const json::exception& e) {
    throw SceneError(std::string("bad dataset: ") + e.what());
  }
}

void write_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SceneError("cannot open '" + path + "' for writing");
  out << serialize_dataset(dataset) << '\n';
  if (!out) throw SceneError("failed writing '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SceneError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

}  // namespace curio
