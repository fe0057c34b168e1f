#include <benchmark/benchmark.h>

#include "gengap/geometry.hpp"
#include "gengap/metrics.hpp"
#include "gengap/predictor.hpp"
#include "gengap/rng.hpp"
#include "gengap/sampler.hpp"

namespace {

using namespace gengap;

PointDataset circle(int n) { return make_circle_dataset(n, 12.0, CircleMode::kSymmetric, 0); }

void BM_PosteriorMean(benchmark::State& state) {
  const PointMatrix train = circle(static_cast<int>(state.range(0))).split_points(Split::kTrain);
  Point x(2);
  x << 3.0, -4.0;
  for (auto _ : state) benchmark::DoNotOptimize(posterior_mean(x, 0.7, train));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PosteriorMean)->Arg(16)->Arg(64)->Arg(1024);

void BM_HeunSample(benchmark::State& state) {
  const auto ds = circle(16);
  const Denoiser denoiser(PredictorSpec::error_prone(1.2), ds);
  const auto schedule = make_schedule(0.002, 28.0, 7.0, static_cast<int>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(heun_sample(denoiser, schedule, seed++).endpoint());
}
BENCHMARK(BM_HeunSample)->Arg(32)->Arg(128);

void BM_FrechetDistance(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  NormalSource src(1);
  PointMatrix a(4 * d, d), b(4 * d, d);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    a.row(r) = src.vector(d).transpose();
    b.row(r) = src.vector(d).transpose();
  }
  const auto ga = fit_gaussian(a), gb = fit_gaussian(b);
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(ga, gb));
}
BENCHMARK(BM_FrechetDistance)->Arg(2)->Arg(64)->Arg(256);

void BM_GapGrid(benchmark::State& state) {
  const auto ds = circle(16);
  const Denoiser denoiser(PredictorSpec::error_prone(1.2), ds);
  GridSpec grid;
  grid.resolution = static_cast<int>(state.range(0));
  const NoiseDraws draws;
  for (auto _ : state) benchmark::DoNotOptimize(gap_grid(denoiser, ds, 1.1, grid, draws).gap.data());
}
BENCHMARK(BM_GapGrid)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
