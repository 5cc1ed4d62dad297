#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "curio/vision.hpp"
#include "fixtures.hpp"

namespace curio {
namespace {

using namespace curio::testing;

std::vector<Scene> scenes(std::size_t n, std::uint64_t seed) {
  std::vector<Scene> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_scene(standard(), {}, seed + i, i));
  return out;
}

// Annotation set with every slot of `train` labeled with its true value.
AnnotationSet labeled(std::span<const Scene> train, const FeatureEmbedding& emb, double sigma) {
  AnnotationSet data(4, emb.dim());
  for (const Scene& s : train) {
    const auto f = emb.featurize(s, sigma, 0);
    for (std::size_t k = 0; k < s.size(); ++k)
      for (std::size_t a = 0; a < 4; ++a)
        data.add(a, {f.row(static_cast<Eigen::Index>(k)).data(), emb.dim()}, s.value(k, a));
  }
  return data;
}

TEST(Featurize, NoiseFreeIdenticalObjects) {
  const FeatureEmbedding emb(standard(), 64, 1);
  const Scene s = make_scene({object_at(0.2, 0.2, {1, 2, 0, 1}), object_at(0.7, 0.7, {1, 2, 0, 1})});
  const auto f = emb.featurize(s, 0.0, 5);
  EXPECT_EQ(f.row(0), f.row(1));
  EXPECT_EQ(f.row(0), emb.embed({1, 2, 0, 1}).row(0));
}

TEST(Featurize, Deterministic) {
  const Scene s = generate_scene(standard(), {}, 3);
  const FeatureEmbedding a(standard(), 64, 7), b(standard(), 64, 7);
  EXPECT_EQ(a.featurize(s, 0.1, 11), b.featurize(s, 0.1, 11));
  EXPECT_NE(a.featurize(s, 0.1, 11), a.featurize(s, 0.1, 12));
}

// A least-squares linear probe on noise-free features separates every concept.
TEST(Featurize, LinearProbeSeparatesValues) {
  const FeatureEmbedding emb(standard(), 64, 2);
  const auto train = scenes(60, 100);
  for (std::size_t a = 0; a < 4; ++a) {
    std::vector<Eigen::VectorXd> xs;
    std::vector<int> ys;
    for (const Scene& s : train) {
      const auto f = emb.featurize(s, 0.0, 0);
      for (std::size_t k = 0; k < s.size(); ++k) {
        Eigen::VectorXd x(emb.dim() + 1);
        x << f.row(static_cast<Eigen::Index>(k)).transpose(), 1.0;
        xs.push_back(x);
        ys.push_back(s.value(k, a));
      }
    }
    const auto n = static_cast<Eigen::Index>(xs.size());
    const auto c = static_cast<Eigen::Index>(standard()->num_values(a));
    Eigen::MatrixXd X(n, emb.dim() + 1), Y = Eigen::MatrixXd::Zero(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      X.row(i) = xs[static_cast<std::size_t>(i)].transpose();
      Y(i, ys[static_cast<std::size_t>(i)]) = 1.0;
    }
    const Eigen::MatrixXd W = X.completeOrthogonalDecomposition().solve(Y);
    const Eigen::MatrixXd P = X * W;
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg;
      P.row(i).maxCoeff(&arg);
      correct += arg == ys[static_cast<std::size_t>(i)];
    }
    EXPECT_EQ(correct, xs.size()) << "concept " << a;
  }
}

TEST(Predict, FreshHeadsAreUnconfident) {
  const FeatureEmbedding emb(standard(), 64, 3);
  const double tau1 = annealed_threshold(1, 30);
  for (std::uint64_t init = 0; init < 5; ++init) {
    const VisualSystem v(standard(), VisionConfig{}, init);
    for (const Scene& s : scenes(20, 50)) {
      std::vector<Box> boxes;
      for (const auto& o : s.objects) boxes.push_back(o.location);
      const VisualGraph g = v.predict(emb.featurize(s, 0.1, 0), boxes);
      for (const auto& row : g.slots) {
        double sum = 0.0, mx = 0.0;
        for (double p : row) {
          sum += p;
          mx = std::max(mx, p);
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
        EXPECT_LT(mx, tau1);
      }
    }
  }
}

TEST(Predict, UntrainedIsAtChance) {
  const FeatureEmbedding emb(standard(), 64, 4);
  const VisualSystem v(standard(), VisionConfig{}, 9);
  std::size_t correct = 0, total = 0;
  for (const Scene& s : scenes(400, 1000)) {
    const auto p = v.predict_concept(0, emb.featurize(s, 0.1, 0));
    for (std::size_t k = 0; k < s.size(); ++k) {
      Eigen::Index arg;
      p.row(static_cast<Eigen::Index>(k)).maxCoeff(&arg);
      correct += arg == s.value(k, 0);
      ++total;
    }
  }
  EXPECT_NEAR(static_cast<double>(correct) / static_cast<double>(total), 1.0 / 3.0, 0.05);
}

TEST(Train, EmptyDatasetLeavesHeads) {
  VisualSystem v(standard(), VisionConfig{}, 1);
  const VisualSystem fresh(standard(), VisionConfig{}, 1);
  Rng rng(0);
  const auto stats = v.train(AnnotationSet(4, 64), 50, 1e-3, rng);
  for (const auto& s : stats) EXPECT_FALSE(s.trained);
  EXPECT_EQ(v.to_json(), fresh.to_json());
}

TEST(Train, AnnotationThreshold) {
  const FeatureEmbedding emb(standard(), 64, 5);
  VisualSystem v(standard(), VisionConfig{}, 2);
  AnnotationSet data(4, 64);
  const auto row = emb.embed({0, 0, 0, 0});
  const std::span<const double> x(row.data(), 64);
  for (int i = 0; i < 14; ++i) data.add(0, x, i % 3);  // shape needs 15
  for (int i = 0; i < 10; ++i) data.add(2, x, i % 2);  // material needs 10
  Rng rng(0);
  const auto stats = v.train(data, 5, 1e-3, rng);
  EXPECT_FALSE(stats[0].trained);
  EXPECT_FALSE(stats[1].trained);
  EXPECT_TRUE(stats[2].trained);
  EXPECT_FALSE(stats[3].trained);
}

TEST(Train, SupervisedCeiling) {
  const FeatureEmbedding emb(standard(), 64, 6);
  const auto train = scenes(30, 2000);  // about 200 labels per concept
  const auto held = scenes(50, 3000);
  const AnnotationSet data = labeled(train, emb, 0.0);
  ASSERT_GE(data.count(0), 150u);
  ASSERT_LE(data.count(0), 300u);
  VisualSystem v(standard(), VisionConfig{}, 3);
  Rng rng(1);
  double before = 0.0;
  for (int round = 0; round < 10; ++round) {
    const auto stats = v.train(data, 100, 3e-3, rng);
    for (const auto& s : stats) {
      ASSERT_TRUE(s.trained);
      EXPECT_LE(s.loss_after, 1.1 * s.loss_before);
    }
    if (round == 0) before = stats[0].loss_before;
  }
  const auto final = v.train(data, 1, 1e-6, rng);
  for (const auto& s : final) EXPECT_LT(s.loss_before, 0.05);
  EXPECT_GT(final[0].loss_before, -1.0);
  EXPECT_GT(before, 0.5);
  EXPECT_GT(v.accuracy(held, emb, 0.0, 0), 0.95);
}

TEST(Train, ResetRestoresInitialization) {
  const FeatureEmbedding emb(standard(), 64, 7);
  VisualSystem v(standard(), VisionConfig{}, 4);
  const std::string initial = v.to_json();
  Rng rng(2);
  v.train(labeled(scenes(10, 10), emb, 0.1), 20, 1e-3, rng);
  EXPECT_NE(v.to_json(), initial);
  v.reset(4);
  EXPECT_EQ(v.to_json(), initial);
}

}  // namespace
}  // namespace curio
