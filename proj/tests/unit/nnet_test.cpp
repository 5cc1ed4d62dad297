#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "curio/nnet/distributions.hpp"
#include "curio/nnet/layers.hpp"
#include "curio/nnet/params.hpp"
#include "curio/random.hpp"

namespace curio::nn {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Central differences, written out independently of the library helper.
Matrix fd(Matrix& x, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f();
    x.data()[i] = keep - h;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double rel(const Matrix& a, const Matrix& b) {
  const double denom = std::max(a.norm() + b.norm(), 1e-12);
  return (a - b).norm() / denom;
}

TEST(Dense, IdentityAndZero) {
  Rng rng(1);
  ParamStore store;
  Dense lin(store, "lin", 3, 3, Activation::kLinear, rng);
  lin.weight().value = Matrix::Identity(3, 3);
  lin.bias().value.setZero();
  const Matrix x = random_matrix(4, 3, rng);
  EXPECT_EQ(lin.forward(x), x);
  Dense th(store, "th", 5, 2, Activation::kTanh, rng);
  EXPECT_TRUE(th.forward(Matrix::Zero(2, 5)).isZero(0.0));
}

TEST(Dense, GradientMatchesDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    ParamStore store;
    Dense d(store, "d", 8, 8, Activation::kTanh, rng);
    d.bias().value = random_matrix(1, 8, rng, 0.1);
    Matrix x = random_matrix(3, 8, rng);
    const Matrix target = random_matrix(3, 8, rng);
    auto loss = [&] { return 0.5 * (d.forward(x) - target).squaredNorm(); };
    Dense::Cache cache;
    const Matrix y = d.forward(x, &cache);
    store.zero_grad();
    const Matrix dx = d.backward(cache, y - target);
    EXPECT_LE(rel(d.weight().grad, fd(d.weight().value, loss)), 1e-4);
    EXPECT_LE(rel(d.bias().grad, fd(d.bias().value, loss)), 1e-4);
    EXPECT_LE(rel(dx, fd(x, loss)), 1e-4);
  }
}

TEST(Lstm, ZeroWeightsGiveZeroHidden) {
  Rng rng(2);
  ParamStore store;
  LstmCell cell(store, "lstm", 4, 3, rng);
  for (auto& [_, p] : store.params()) p.value.setZero();
  const auto s = cell.step(random_matrix(2, 4, rng), {random_matrix(2, 3, rng), Matrix::Zero(2, 3)});
  EXPECT_TRUE(s.h.isZero(0.0));
}

TEST(Lstm, PureStep) {
  Rng rng(3);
  ParamStore store;
  LstmCell cell(store, "lstm", 4, 3, rng);
  const Matrix x = random_matrix(2, 4, rng);
  const LstmCell::State prev{random_matrix(2, 3, rng), random_matrix(2, 3, rng)};
  const auto a = cell.step(x, prev), b = cell.step(x, prev);
  EXPECT_EQ(a.h, b.h);
  EXPECT_EQ(a.c, b.c);
}

TEST(Lstm, ThreeStepUnrollGradient) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 10);
    ParamStore store;
    LstmCell cell(store, "lstm", 5, 4, rng);
    store.at("lstm.b").value += random_matrix(1, 16, rng, 0.1);
    std::vector<Matrix> xs;
    for (int t = 0; t < 3; ++t) xs.push_back(random_matrix(3, 5, rng));
    Matrix h0 = random_matrix(3, 4, rng, 0.5), c0 = random_matrix(3, 4, rng, 0.5);
    const Matrix wh = random_matrix(3, 4, rng), wc = random_matrix(3, 4, rng);
    auto loss = [&] {
      LstmCell::State s{h0, c0};
      double total = 0.0;
      for (const auto& x : xs) {
        s = cell.step(x, s);
        total += s.h.cwiseProduct(wh).sum();
      }
      return total + s.c.cwiseProduct(wc).sum();
    };
    std::vector<LstmCell::Cache> caches(3);
    LstmCell::State s{h0, c0};
    for (int t = 0; t < 3; ++t) s = cell.step(xs[t], s, &caches[t]);
    store.zero_grad();
    Matrix dh = Matrix::Zero(3, 4), dc = wc;
    Matrix dx0;
    for (int t = 2; t >= 0; --t) {
      dh += wh;
      const auto g = cell.backward(caches[t], dh, dc);
      dh = g.dh_prev;
      dc = g.dc_prev;
      if (t == 0) dx0 = g.dx;
    }
    for (const char* name : {"lstm.Wx", "lstm.Wh", "lstm.b"}) {
      Param& p = store.at(name);
      const Matrix analytic = p.grad;
      EXPECT_LE(rel(analytic, fd(p.value, loss)), 1e-4) << name << " seed " << seed;
    }
    EXPECT_LE(rel(dx0, fd(xs[0], loss)), 1e-4);
    EXPECT_LE(rel(dh, fd(h0, loss)), 1e-4);
    EXPECT_LE(rel(dc, fd(c0, loss)), 1e-4);
  }
}

TEST(Gcn, IdentityPassesThrough) {
  Rng rng(4);
  const Matrix z = random_matrix(5, 3, rng);
  EXPECT_TRUE(gcn_forward(Matrix::Identity(3, 3), z, Matrix::Identity(5, 5), Activation::kLinear).isApprox(z));
}

TEST(Gcn, AffinityValues) {
  Matrix pts(3, 2);
  pts << 0.0, 0.0, 1.0, 0.0, 0.5, 0.0;
  const Matrix a = affinity_from_points(pts);
  EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
  EXPECT_NEAR(a(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(a(0, 1), 0.36788, 1e-5);
  EXPECT_NEAR(a(0, 2), std::exp(-0.5), 1e-15);
  EXPECT_EQ(a, a.transpose());
}

TEST(Gcn, MatchesExplicitSum) {
  Rng rng(5);
  const Matrix W = random_matrix(2, 3, rng), z = random_matrix(4, 3, rng), A = random_matrix(4, 4, rng).cwiseAbs();
  const Matrix out = gcn_forward(W, z, A, Activation::kTanh);
  for (int i = 0; i < 4; ++i)
    for (int o = 0; o < 2; ++o) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j)
        for (int c = 0; c < 3; ++c) s += A(i, j) * W(o, c) * z(j, c);
      EXPECT_NEAR(out(i, o), std::tanh(s), 1e-12);
    }
}

TEST(Gcn, GradientOnFiveNodes) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 20);
    ParamStore store;
    GcnLayer layer(store, "gcn", 4, 3, Activation::kTanh, rng);
    Matrix z = random_matrix(5, 4, rng, 0.3);
    const Matrix A = affinity_from_points(random_matrix(5, 2, rng));
    const Matrix w = random_matrix(5, 3, rng);
    auto loss = [&] { return layer.forward(z, A).cwiseProduct(w).sum(); };
    GcnLayer::Cache cache;
    layer.forward(z, A, &cache);
    store.zero_grad();
    const Matrix dz = layer.backward(cache, w);
    EXPECT_LE(rel(layer.weight().grad, fd(layer.weight().value, loss)), 1e-4);
    EXPECT_LE(rel(dz, fd(z, loss)), 1e-4);
  }
}

TEST(Sampling, EpsZeroIsArgmax) {
  Rng rng(6);
  const std::vector<double> logits{0.1, 2.0, -1.0, 1.9};
  for (int i = 0; i < 200; ++i) EXPECT_EQ(softmax_sample_eps(logits, {}, 0.0, Mode::kTrain, rng), 1u);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(softmax_sample_eps(logits, {}, 1.0, Mode::kEval, rng), 1u);
}

TEST(Sampling, SingleUnmaskedEntry) {
  Rng rng(7);
  const std::vector<double> logits{5.0, 0.0, 3.0, 1.0};
  const std::vector<char> mask{1, 1, 0, 1};
  for (double eps : {0.0, 0.5, 1.0})
    for (int i = 0; i < 100; ++i) EXPECT_EQ(softmax_sample_eps(logits, mask, eps, Mode::kTrain, rng), 2u);
}

TEST(Sampling, EpsOneIsUniformOverUnmasked) {
  Rng rng(8);
  const std::vector<double> logits{3.0, 0.0, -2.0, 1.0, 9.0, 0.5};
  const std::vector<char> mask{0, 0, 1, 0, 1, 0};
  std::vector<int> counts(6, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[softmax_sample_eps(logits, mask, 1.0, Mode::kTrain, rng)];
  EXPECT_EQ(counts[2], 0);
  EXPECT_EQ(counts[4], 0);
  for (int i : {0, 1, 3, 5}) EXPECT_NEAR(counts[i] / static_cast<double>(n), 0.25, 0.01);
}

TEST(Distributions, MaskedSoftmaxAndGradients) {
  const std::vector<double> logits{0.3, -1.2, 2.0};
  const std::vector<char> mask{0, 1, 0};
  const auto p = masked_softmax(logits, mask);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_NEAR(p[0] + p[2], 1.0, 1e-15);
  EXPECT_NEAR(p[2] / p[0], std::exp(1.7), 1e-12);

  Matrix z(1, 3);
  z << 0.3, -1.2, 2.0;
  auto logp = [&] { return std::log(masked_softmax({z.data(), 3})[2]); };
  auto ent = [&] { return categorical_entropy(masked_softmax({z.data(), 3})); };
  const auto probs = masked_softmax({z.data(), 3});
  const auto g = log_prob_grad(probs, 2);
  const auto h = entropy_grad(probs);
  const Matrix ng = fd(z, logp), nh = fd(z, ent);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(g[i], ng(0, i), 1e-8);
    EXPECT_NEAR(h[i], nh(0, i), 1e-8);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Rng rng(9);
  ParamStore store;
  Param& p = store.add("p", 2, 3, rng);
  const Matrix before = p.value;
  for (int i = 0; i < 5; ++i) {
    store.zero_grad();
    store.adam_step(1e-2);
  }
  EXPECT_EQ(p.value, before);
}

TEST(Adam, LearningRateSchedule) {
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-4, 0.99, 1), 1e-4);
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-4, 0.99, 2), 1e-4 * 0.99);
  EXPECT_THROW(scheduled_lr(1e-4, 0.99, 0), NnError);
}

TEST(Adam, QuadraticDecreasesMonotonically) {
  Rng rng(10);
  ParamStore store;
  Param& p = store.add_constant("x", 1, 1, 3.0);
  std::vector<double> losses;
  for (int step = 0; step < 200; ++step) {
    const double x = p.value(0, 0);
    losses.push_back(0.5 * (x - 1.0) * (x - 1.0));
    store.zero_grad();
    p.grad(0, 0) = x - 1.0;
    store.adam_step(0.005);
  }
  for (std::size_t t = 11; t < losses.size(); ++t) EXPECT_LT(losses[t], losses[t - 1]) << t;
  EXPECT_LT(losses.back(), 0.5 * losses.front());
}

TEST(Params, ClipAndCheckpoint) {
  Rng rng(11);
  ParamStore store;
  store.add("a", 2, 2, rng);
  store.add("b", 1, 3, rng);
  store.zero_grad();
  store.at("a").grad.setConstant(3.0);
  store.at("b").grad.setConstant(4.0);
  const double norm = store.clip_grad_norm(5.0);
  EXPECT_NEAR(norm, std::sqrt(4 * 9.0 + 3 * 16.0), 1e-12);
  EXPECT_NEAR(store.grad_norm(), 5.0, 1e-12);

  ParamStore other;
  other.add("a", 2, 2, rng);
  other.add("b", 1, 3, rng);
  other.load_json(store.to_json("test"), "test");
  EXPECT_EQ(other.at("a").value, store.at("a").value);
  EXPECT_THROW(other.load_json(store.to_json("test"), "vision"), NnError);
}

TEST(Layers, RejectNonFinite) {
  Rng rng(12);
  ParamStore store;
  Dense d(store, "d", 2, 2, Activation::kLinear, rng);
  Matrix x(1, 2);
  x << std::nan(""), 0.0;
  EXPECT_THROW(d.forward(x), NnError);
  EXPECT_THROW(d.forward(Matrix::Zero(1, 3)), NnError);
}

}  // namespace
}  // namespace curio::nn
