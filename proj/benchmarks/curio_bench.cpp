#include <benchmark/benchmark.h>

#include "curio/harness.hpp"

using namespace curio;

namespace {

std::shared_ptr<const AttributeSchema> schema() {
  static const auto s = std::make_shared<const AttributeSchema>(standard_schema());
  return s;
}

void BM_ExecuteOneHop(benchmark::State& state) {
  const Scene scene = generate_scene(schema(), {8, 8, 0.02}, 3);
  const GraphMemory m = init_uniform(scene);
  const Program p = compose_program({2, 1, true, 4}, m).program;
  for (auto _ : state) benchmark::DoNotOptimize(execute(p, scene));
}
BENCHMARK(BM_ExecuteOneHop);

void BM_LstmStep(benchmark::State& state) {
  nn::ParamStore store;
  Rng rng(1);
  const auto rows = state.range(0);
  nn::LstmCell cell(store, "lstm", 32, 64, rng);
  const nn::Matrix x = nn::Matrix::Random(rows, 32);
  auto s = cell.zero_state(rows);
  for (auto _ : state) {
    s = cell.step(x, s);
    benchmark::DoNotOptimize(s.h.data());
  }
}
BENCHMARK(BM_LstmStep)->Arg(20)->Arg(40);

void BM_PolicyForward(benchmark::State& state) {
  const Scene scene = generate_scene(schema(), {static_cast<std::size_t>(state.range(0)),
                                                static_cast<std::size_t>(state.range(0)), 0.02}, 5);
  const GraphMemory m = init_uniform(scene);
  PolicyNetwork net(PolicyConfig{}, 7);
  Rng rng(2);
  const auto obs = net.observe(m, std::nullopt);
  const auto s0 = net.initial_state(scene.size());
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(obs, s0, nn::Mode::kEval, rng).target_slot);
}
BENCHMARK(BM_PolicyForward)->Arg(5)->Arg(8);

void BM_VisionTrain(benchmark::State& state) {
  const FeatureEmbedding emb(schema(), 64, 5);
  AnnotationSet data(schema()->num_concepts(), emb.dim());
  for (std::uint64_t i = 0; i < 30; ++i) {
    const Scene s = generate_scene(schema(), {}, i);
    const auto f = emb.featurize(s, 0.1, 0);
    for (std::size_t k = 0; k < s.size(); ++k)
      for (std::size_t a = 0; a < schema()->num_concepts(); ++a)
        data.add(a, {f.row(static_cast<Eigen::Index>(k)).data(), emb.dim()}, s.value(k, a));
  }
  VisualSystem vision(schema(), VisionConfig{}, 1);
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(vision.train(data, 50, 1e-4, rng));
}
BENCHMARK(BM_VisionTrain);

}  // namespace
BENCHMARK_MAIN();
