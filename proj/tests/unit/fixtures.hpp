#pragma once

#include <memory>
#include <vector>

#include "curio/scene.hpp"

namespace curio::testing {

inline std::shared_ptr<const AttributeSchema> standard() {
  static const auto s = std::make_shared<const AttributeSchema>(standard_schema());
  return s;
}

/// Object centered at (cx, cy) with a 0.1 box; attributes in schema concept order.
inline SceneObject object_at(double cx, double cy, std::vector<int> attributes) {
  return SceneObject{Box{cx - 0.05, cy - 0.05, 0.1, 0.1}, std::move(attributes)};
}

inline Scene make_scene(std::vector<SceneObject> objects, std::shared_ptr<const AttributeSchema> schema = standard()) {
  Scene s;
  s.schema = std::move(schema);
  s.objects = std::move(objects);
  return s;
}

// Standard value indices.
enum Shape { kCube = 0, kSphere = 1, kCylinder = 2 };
enum Color { kGray = 0, kRed = 1, kBlue = 2, kGreen = 3, kYellow = 4, kPurple = 5 };
enum Material { kRubber = 0, kMetal = 1 };
enum Size { kLarge = 0, kSmall = 1 };

}  // namespace curio::testing
