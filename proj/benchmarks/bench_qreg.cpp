#include <benchmark/benchmark.h>

#include <qreg/estimator.hpp>
#include <qreg/quadric.hpp>
#include <qreg/spatial.hpp>
#include <qreg/synth.hpp>

namespace {

using namespace qreg;

Scene make_scene(int correspondences) {
  SceneSpec spec;
  spec.surface_size = 0.4;
  spec.points_per_surface = 1000;
  spec.n_correspondences = correspondences;
  spec.inlier_ratio = 0.3;
  spec.noise_sigma = 0.005;
  spec.seed = 1;
  return generate(spec);
}

void BM_KdTreeBuild(benchmark::State& state) {
  const Scene s = make_scene(100);
  for (auto _ : state) benchmark::DoNotOptimize(KdTree(s.source));
}
BENCHMARK(BM_KdTreeBuild);

void BM_Knn50(benchmark::State& state) {
  const Scene s = make_scene(100);
  const KdTree tree(s.source);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tree.knn(s.source[i], 50));
    i = (i + 1) % s.source.size();
  }
}
BENCHMARK(BM_Knn50);

void BM_BuildPatch(benchmark::State& state) {
  const Scene s = make_scene(100);
  const KdTree tree(s.source);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_patch(s.source, tree, i));
    i = (i + 7) % s.source.size();
  }
}
BENCHMARK(BM_BuildPatch);

void BM_QregRegister(benchmark::State& state) {
  const Scene s = make_scene(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(qreg_register(s.correspondences, s.source, s.target, EstimatorConfig{}));
  }
}
BENCHMARK(BM_QregRegister)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_RansacRegister(benchmark::State& state) {
  const Scene s = make_scene(1000);
  const auto iterations = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ransac_register(s.correspondences, s.source, s.target, iterations, EstimatorConfig{}));
  }
}
BENCHMARK(BM_RansacRegister)->Arg(1000)->Arg(50000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
