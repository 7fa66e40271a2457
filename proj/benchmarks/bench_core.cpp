#include <benchmark/benchmark.h>

#include <random>

#include "srotlab/kantorovich.hpp"
#include "srotlab/metric.hpp"
#include "srotlab/singular.hpp"

using namespace srotlab;

namespace {

void BM_FlowExtremal(benchmark::State& state) {
  const FramePtr heis = catalog("heisenberg");
  Vec x0 = Vec::Zero(3), p0(3);
  p0 << 0.7, -0.3, 0.9;
  const int steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(flow_extremal(heis, x0, p0, steps));
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_FlowExtremal)->Arg(200)->Arg(1000);

void BM_ShootEndpoint(benchmark::State& state) {
  const FramePtr heis = catalog("heisenberg");
  Vec x0 = Vec::Zero(3), p0(3);
  p0 << 0.7, -0.3, 0.9;
  const int steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(shoot_endpoint(*heis, x0, p0, steps));
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_ShootEndpoint)->Arg(80)->Arg(200);

void BM_DistanceWarm(benchmark::State& state) {
  const FramePtr heis = catalog("heisenberg");
  Vec x(3), y(3);
  x << 0.1, -0.2, 0.05;
  y << 0.9, 0.4, 0.3;
  DistanceOptions opts;
  opts.shoot_steps = 80;
  opts.verify_steps = 240;
  const DistanceResult cold = distance(heis, x, y, opts);
  const std::vector<Vec> warm = {cold.covectors.front()};
  Vec y2 = y;
  for (auto _ : state) {
    y2(2) = y(2) + 1e-3;
    benchmark::DoNotOptimize(distance_warm(heis, x, y2, warm, opts));
  }
}
BENCHMARK(BM_DistanceWarm);

void BM_DistanceFullSweep(benchmark::State& state) {
  const FramePtr heis = catalog("heisenberg");
  Vec x(3), y(3);
  x << 0.1, -0.2, 0.05;
  y << 0.9, 0.4, 0.3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(distance(heis, x, y));
  }
}
BENCHMARK(BM_DistanceFullSweep);

void BM_TransportSimplex(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(0.0, 10.0);
  Mat C(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) C(a, b) = unif(rng);
  }
  const DiscreteMeasure mu = DiscreteMeasure::equal_weights(Mat::Zero(n, 3));
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_kantorovich(mu, mu, C));
  }
}
BENCHMARK(BM_TransportSimplex)->Arg(30)->Arg(100)->Arg(300);

void BM_EndpointRank(benchmark::State& state) {
  const FramePtr mart = catalog("martinet");
  Vec u(2);
  u << 0.0, 1.0;
  const HorizontalPath arc = constant_control_path(mart, Vec::Zero(3), u);
  for (auto _ : state) {
    benchmark::DoNotOptimize(endpoint_rank(*mart, arc));
  }
}
BENCHMARK(BM_EndpointRank);

}  // namespace

BENCHMARK_MAIN();
