#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <set>

#include "curio/scene.hpp"
#include "fixtures.hpp"

namespace curio {
namespace {

using namespace curio::testing;

TEST(Schema, StandardVocabulary) {
  const AttributeSchema s = standard_schema();
  EXPECT_NO_THROW(s.validate());
  ASSERT_EQ(s.num_concepts(), 4u);
  EXPECT_EQ(s.values[0], (std::vector<std::string>{"cube", "sphere", "cylinder"}));
  EXPECT_EQ(s.num_values(1), 6u);
  EXPECT_EQ(s.num_values(2), 2u);
  EXPECT_EQ(s.num_values(3), 2u);
}

TEST(Schema, MixedIsUnionOfStandardAndNovel) {
  const auto st = standard_schema(), nv = novel_schema(), mx = mixed_schema();
  for (std::size_t a = 0; a < st.num_concepts(); ++a) {
    std::set<std::string> want(st.values[a].begin(), st.values[a].end());
    want.insert(nv.values[a].begin(), nv.values[a].end());
    EXPECT_EQ(std::set<std::string>(mx.values[a].begin(), mx.values[a].end()), want) << st.concepts[a];
  }
}

TEST(Schema, LookupAndValidation) {
  EXPECT_EQ(schema_by_name("arid").name, "arid");
  EXPECT_THROW(schema_by_name("martian"), SceneError);
  AttributeSchema bad = standard_schema();
  bad.values[2] = {"rubber"};
  EXPECT_THROW(bad.validate(), SceneError);
  bad = standard_schema();
  bad.description_order = {0, 0, 1, 2};
  EXPECT_THROW(bad.validate(), SceneError);
}

TEST(GenerateScene, RespectsPostconditions) {
  const Scene s = generate_scene(standard(), {}, 7);
  EXPECT_GE(s.size(), 5u);
  EXPECT_LE(s.size(), 10u);
  for (const auto& o : s.objects) {
    ASSERT_EQ(o.attributes.size(), 4u);
    for (std::size_t a = 0; a < 4; ++a) {
      EXPECT_GE(o.attributes[a], 0);
      EXPECT_LT(o.attributes[a], static_cast<int>(s.schema->num_values(a)));
    }
  }
  EXPECT_NO_THROW(s.validate(0.02));
}

TEST(GenerateScene, SameSeedSameScene) {
  EXPECT_EQ(generate_scene(standard(), {}, 11), generate_scene(standard(), {}, 11));
  EXPECT_FALSE(generate_scene(standard(), {}, 11) == generate_scene(standard(), {}, 12));
}

TEST(GenerateScene, StandardShapesOnly) {
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    for (const auto& o : generate_scene(standard(), {}, seed).objects) {
      const auto& name = standard()->values[0][static_cast<std::size_t>(o.attributes[0])];
      EXPECT_TRUE(name == "cube" || name == "sphere" || name == "cylinder") << name;
    }
}

TEST(GenerateScene, CentersSeparatedOnBothAxes) {
  SceneGenParams p;
  p.min_objects = p.max_objects = 10;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(standard(), p, seed);
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        const auto &a = s.objects[i].location, &b = s.objects[j].location;
        EXPECT_GE(std::abs(a.center_x() - b.center_x()), p.min_sep);
        EXPECT_GE(std::abs(a.center_y() - b.center_y()), p.min_sep);
      }
  }
}

TEST(GenerateScene, RejectsImpossibleParams) {
  SceneGenParams p;
  p.min_objects = 6;
  p.max_objects = 5;
  EXPECT_THROW(generate_scene(standard(), p, 0), SceneError);
}

TEST(SpatialRelation, AxisConventions) {
  const auto a = object_at(0.2, 0.5, {0, 0, 0, 0});
  const auto b = object_at(0.8, 0.4, {0, 0, 0, 0});
  EXPECT_EQ(spatial_relation(a, b).horizontal, Relation::kLeft);
  EXPECT_EQ(spatial_relation(b, a).horizontal, Relation::kRight);
  const auto front = object_at(0.5, 0.9, {0, 0, 0, 0});
  const auto back = object_at(0.6, 0.1, {0, 0, 0, 0});
  EXPECT_EQ(spatial_relation(front, back).depth, Relation::kFront);
  EXPECT_EQ(spatial_relation(back, front).depth, Relation::kBehind);
  EXPECT_TRUE(satisfies(a, Relation::kLeft, b));
  EXPECT_FALSE(satisfies(a, Relation::kRight, b));
}

Relation inverse(Relation r) {
  switch (r) {
    case Relation::kLeft: return Relation::kRight;
    case Relation::kRight: return Relation::kLeft;
    case Relation::kFront: return Relation::kBehind;
    case Relation::kBehind: return Relation::kFront;
  }
  return r;
}

TEST(SpatialRelation, Antisymmetric) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Scene s = generate_scene(standard(), {}, seed);
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (i == j) continue;
        const auto ij = spatial_relation(s.objects[i], s.objects[j]);
        const auto ji = spatial_relation(s.objects[j], s.objects[i]);
        EXPECT_EQ(ji.horizontal, inverse(ij.horizontal));
        EXPECT_EQ(ji.depth, inverse(ij.depth));
      }
  }
}

TEST(ExtremalPosition, Basics) {
  // left-most (0), right-most (1), front (2), back (3), interior (4)
  const Scene s = make_scene({object_at(0.1, 0.5, {0, 0, 0, 0}), object_at(0.9, 0.45, {0, 0, 0, 0}),
                              object_at(0.5, 0.9, {0, 0, 0, 0}), object_at(0.4, 0.1, {0, 0, 0, 0}),
                              object_at(0.55, 0.55, {0, 0, 0, 0})});
  EXPECT_EQ(extremal_position(s, 0), Position::kLeftMost);
  EXPECT_EQ(extremal_position(s, 1), Position::kRightMost);
  EXPECT_EQ(extremal_position(s, 2), Position::kClosest);
  EXPECT_EQ(extremal_position(s, 3), Position::kFarthest);
  EXPECT_EQ(extremal_position(s, 4), Position::kNone);
}

// Every combination of raw extremes an object can hold resolves to the first
// one in the order left-most, right-most, closest, farthest.
TEST(ExtremalPosition, PriorityTable) {
  const std::array<Position, 4> order{Position::kLeftMost, Position::kRightMost, Position::kClosest,
                                      Position::kFarthest};
  int combos = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    SceneGenParams p;
    p.min_objects = 2;
    p.max_objects = 4;
    const Scene s = generate_scene(standard(), p, seed);
    for (std::size_t k = 0; k < s.size(); ++k) {
      Position want = Position::kNone;
      for (Position pos : order)
        if (is_extreme(s.objects, k, pos)) {
          want = pos;
          break;
        }
      EXPECT_EQ(extremal_position(s, k), want);
      int held = 0;
      for (Position pos : order) held += is_extreme(s.objects, k, pos);
      combos += held >= 2;
    }
  }
  EXPECT_GT(combos, 0);  // the table exercised objects with several extremes

  const Scene corner = make_scene({object_at(0.1, 0.9, {0, 0, 0, 0}), object_at(0.5, 0.5, {0, 0, 0, 0}),
                                   object_at(0.9, 0.2, {0, 0, 0, 0})});
  EXPECT_EQ(extremal_position(corner, 0), Position::kLeftMost);  // also closest
  EXPECT_EQ(extremal_position(corner, 2), Position::kRightMost);  // also farthest
}

TEST(SceneValidate, RejectsTiesAndBadValues) {
  Scene s = make_scene({object_at(0.2, 0.2, {0, 0, 0, 0}), object_at(0.2, 0.6, {0, 0, 0, 0})});
  EXPECT_THROW(s.validate(0.02), SceneError);
  s = make_scene({object_at(0.2, 0.2, {3, 0, 0, 0})});
  EXPECT_THROW(s.validate(), SceneError);
}

TEST(Dataset, SplitsAndFolds) {
  const Dataset ds = generate_dataset(standard_schema(), 1800, 3);
  EXPECT_EQ(ds.train().size(), 900u);
  EXPECT_EQ(ds.val().size(), 300u);
  EXPECT_EQ(ds.test().size(), 600u);
  const auto folds = ds.test_folds();
  ASSERT_EQ(folds.size(), 12u);
  for (const auto& f : folds) EXPECT_EQ(f.size(), 50u);
}

TEST(Dataset, RoundTripsThroughFile) {
  const Dataset ds = generate_dataset(novel_schema(), 30, 5);
  const auto path = (std::filesystem::temp_directory_path() / "curio_dataset_roundtrip.json").string();
  write_dataset(ds, path);
  const Dataset back = read_dataset(path);
  std::filesystem::remove(path);
  EXPECT_EQ(*back.schema, *ds.schema);
  ASSERT_EQ(back.scenes.size(), ds.scenes.size());
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) EXPECT_EQ(back.scenes[i], ds.scenes[i]);
  EXPECT_EQ(back.train_count, ds.train_count);
  EXPECT_EQ(back.test_count, ds.test_count);
}

TEST(Dataset, RejectsMalformedText) {
  EXPECT_THROW(parse_dataset("{not json"), SceneError);
  EXPECT_THROW(parse_dataset(R"({"format": "something-else"})"), SceneError);
}

}  // namespace
}  // namespace curio
