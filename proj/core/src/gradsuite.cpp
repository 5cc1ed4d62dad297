#include "curio/gradsuite.hpp"

#include <algorithm>
#include <functional>

#include "curio/nnet/gradcheck.hpp"
#include "curio/nnet/layers.hpp"
#include "curio/policy.hpp"

namespace curio {

namespace {

using nn::Matrix;

constexpr double kLayerTolerance = 1e-4;
constexpr double kCompositeTolerance = 1e-3;
// gradients this small are pure finite-difference noise
constexpr double kNormFloor = 1e-5;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double worst(std::initializer_list<double> errs) { return *std::max_element(errs.begin(), errs.end()); }

double store_error(nn::ParamStore& store, const std::function<double()>& loss, double h = 1e-5) {
  double err = 0.0;
  for (auto& [name, p] : store.params()) {
    const Matrix numeric = nn::numeric_gradient(p.value, loss, h);
    err = std::max(err, nn::relative_error(p.grad, numeric, kNormFloor));
  }
  return err;
}

}  // namespace

double check_dense_gradients(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0xde45e}));
  nn::ParamStore store;
  nn::Dense layer(store, "dense", 5, 4, nn::Activation::kTanh, rng);
  Matrix x = random_matrix(3, 5, rng);
  const Matrix r = random_matrix(3, 4, rng);
  auto loss = [&] { return layer.forward(x).cwiseProduct(r).sum(); };

  store.zero_grad();
  nn::Dense::Cache cache;
  layer.forward(x, &cache);
  const Matrix dx = layer.backward(cache, r);
  const double param_err = store_error(store, loss);
  return worst({param_err, nn::relative_error(dx, nn::numeric_gradient(x, loss), kNormFloor)});
}

double check_lstm_gradients(std::uint64_t seed, std::size_t steps) {
  Rng rng(derive_seed(seed, {0x1573}));
  const Eigen::Index K = 3, in = 5, H = 4;
  nn::ParamStore store;
  nn::LstmCell cell(store, "lstm", in, H, rng);
  std::vector<Matrix> xs, rh;
  for (std::size_t t = 0; t < steps; ++t) {
    xs.push_back(random_matrix(K, in, rng));
    rh.push_back(random_matrix(K, H, rng));
  }
  const Matrix rc = random_matrix(K, H, rng);
  nn::LstmCell::State init{0.5 * random_matrix(K, H, rng), 0.5 * random_matrix(K, H, rng)};

  auto loss = [&] {
    nn::LstmCell::State s = init;
    double l = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      s = cell.step(xs[t], s);
      l += s.h.cwiseProduct(rh[t]).sum();
    }
    return l + s.c.cwiseProduct(rc).sum();
  };

  store.zero_grad();
  std::vector<nn::LstmCell::Cache> caches(steps);
  nn::LstmCell::State s = init;
  for (std::size_t t = 0; t < steps; ++t) s = cell.step(xs[t], s, &caches[t]);
  Matrix dh = Matrix::Zero(K, H), dc = rc;
  Matrix dx0;
  for (std::size_t t = steps; t-- > 0;) {
    dh += rh[t];
    const auto g = cell.backward(caches[t], dh, dc);
    dh = g.dh_prev;
    dc = g.dc_prev;
    if (t == 0) dx0 = g.dx;
  }
  const double param_err = store_error(store, loss);
  return worst({param_err, nn::relative_error(dx0, nn::numeric_gradient(xs[0], loss), kNormFloor),
                nn::relative_error(dh, nn::numeric_gradient(init.h, loss), kNormFloor),
                nn::relative_error(dc, nn::numeric_gradient(init.c, loss), kNormFloor)});
}

double check_gcn_gradients(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x6c9}));
  const Eigen::Index N = 5;
  nn::ParamStore store;
  nn::GcnLayer g1(store, "gcn1", 4, 6, nn::Activation::kRelu, rng);
  nn::GcnLayer g2(store, "gcn2", 6, 3, nn::Activation::kTanh, rng);
  // small inputs keep the tanh layer out of saturation
  Matrix z = 0.3 * random_matrix(N, 4, rng);
  const Matrix a = nn::affinity_from_points(random_matrix(N, 2, rng));
  const Matrix r = random_matrix(N, 3, rng);
  auto loss = [&] { return g2.forward(g1.forward(z, a), a).cwiseProduct(r).sum(); };

  store.zero_grad();
  nn::GcnLayer::Cache c1, c2;
  g2.forward(g1.forward(z, a, &c1), a, &c2);
  const Matrix dz = g1.backward(c1, g2.backward(c2, r));
  const double param_err = store_error(store, loss);
  return worst({param_err, nn::relative_error(dz, nn::numeric_gradient(z, loss), kNormFloor)});
}

double check_policy_gradients(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x9011c7}));
  PolicyConfig cfg;
  cfg.slot_dim = 3;
  cfg.ref_dim = 6;
  PolicyNetwork net(cfg, derive_seed(seed, {1}));
  // zero-initialized biases put ReLUs exactly on their kink; check at a generic point instead
  for (auto& [name, p] : net.params().params()) p.value += 0.05 * random_matrix(p.value.rows(), p.value.cols(), rng);

  const auto schema = std::make_shared<const AttributeSchema>(standard_schema());
  SceneGenParams gp;
  gp.min_objects = gp.max_objects = 4;
  const Scene scene = generate_scene(schema, gp, derive_seed(seed, {2}));
  GraphMemory memory = init_uniform(scene);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (std::size_t k = 0; k < scene.size(); ++k)
    for (std::size_t a = 0; a < schema->num_concepts(); ++a) {
      if (uniform01(rng) < 0.3) {
        memory.commit(k, a, scene.value(k, a), Provenance::kOracle);
        continue;
      }
      std::vector<double> p(schema->num_values(a));
      double s = 0.0;
      for (double& v : p) s += (v = u(rng));
      for (double& v : p) v /= s;
      memory.set_distribution(k, a, p, Provenance::kUnset);
    }

  // sample a three-round dialog, then replay it with the sampled choices forced
  constexpr std::size_t kRounds = 3;
  const std::size_t K = scene.size();
  std::vector<char> failed(K * cfg.max_concepts * (K + 1), 0);
  std::vector<Observation> obs;
  std::vector<PolicyNetwork::Forced> forced;
  std::vector<PolicyNetwork::LossWeights> weights;
  std::optional<PreviousRound> last;
  PolicyNetwork::State state = net.initial_state(K);
  for (std::size_t t = 0; t < kRounds; ++t) {
    obs.push_back(net.observe(memory, last, failed));
    const auto out = net.forward(obs.back(), state, nn::Mode::kTrain, rng);
    state = out.next;
    forced.push_back({out.target_slot, out.action.use_reference, out.reference_candidate});
    weights.push_back({uniform01(rng) - 0.5, 0.3, uniform01(rng), 0.05});
    const AnswerKind kind = t % 2 == 0 ? AnswerKind::kAmbiguous : AnswerKind::kValue;
    if (kind != AnswerKind::kValue)
      failed[out.target_slot * (K + 1) + (out.action.use_reference ? 1 + *out.action.reference_object : 0)] = 1;
    last = PreviousRound{out.action, kind};
  }

  auto loss = [&] {
    PolicyNetwork::State s = net.initial_state(K);
    double l = 0.0;
    for (std::size_t t = 0; t < kRounds; ++t) {
      const auto out = net.forward(obs[t], s, nn::Mode::kTrain, rng, nullptr, &forced[t]);
      l += PolicyNetwork::round_loss(out, weights[t]);
      s = out.next;
    }
    return l;
  };

  net.params().zero_grad();
  std::vector<std::unique_ptr<PolicyNetwork::Cache>> caches(kRounds);
  PolicyNetwork::State s = net.initial_state(K);
  for (std::size_t t = 0; t < kRounds; ++t) s = net.forward(obs[t], s, nn::Mode::kTrain, rng, &caches[t], &forced[t]).next;
  const auto H = static_cast<Eigen::Index>(cfg.lstm_hidden());
  Matrix dh = Matrix::Zero(static_cast<Eigen::Index>(K), H), dc = dh;
  for (std::size_t t = kRounds; t-- > 0;) net.backward(*caches[t], weights[t], dh, dc);
  // a small step keeps the difference quotient on one side of the ReLU kinks
  return store_error(net.params(), loss, 1e-6);
}

std::vector<GradCheckResult> gradient_suite(std::uint64_t base_seed, std::size_t seeds) {
  std::vector<GradCheckResult> out;
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t s = base_seed + i;
    out.push_back({"dense", s, check_dense_gradients(s), kLayerTolerance});
    out.push_back({"lstm", s, check_lstm_gradients(s), kLayerTolerance});
    out.push_back({"gcn", s, check_gcn_gradients(s), kLayerTolerance});
    out.push_back({"policy", s, check_policy_gradients(s), kCompositeTolerance});
  }
  return out;
}

}  // namespace curio
