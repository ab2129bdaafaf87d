#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "cato/datagen.hpp"
#include "cato/mesh.hpp"

using namespace cato;

static void BM_MeshGradient(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Mesh mesh = distort_mesh(n, n, 0.05);
  const MeshGradientOperator op(mesh);
  std::vector<double> u(mesh.nodes());
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = std::sin(3.0 * mesh.xy[2 * k]) * mesh.xy[2 * k + 1];
  for (auto _ : state) benchmark::DoNotOptimize(op.apply(u));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * mesh.nodes()));
}
BENCHMARK(BM_MeshGradient)->Arg(33)->Arg(65)->Arg(129);

// operator construction includes the per-node 2x2 inversions
static void BM_MeshGradientSetup(benchmark::State& state) {
  const Mesh mesh = distort_mesh(65, 65, 0.05);
  for (auto _ : state) benchmark::DoNotOptimize(MeshGradientOperator(mesh));
}
BENCHMARK(BM_MeshGradientSetup);

static void BM_DarcySolve(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Mesh mesh = Mesh::regular(n, n);
  const auto a = gen_coefficient(5, n, n, 10.0);
  std::vector<double> f(mesh.nodes());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = manufactured_source(mesh.xy[2 * k], mesh.xy[2 * k + 1]);
  SolveStats stats;
  for (auto _ : state) benchmark::DoNotOptimize(solve_darcy(a, mesh, f, 1e-10, &stats));
  state.counters["cg_iters"] = static_cast<double>(stats.iterations);
}
BENCHMARK(BM_DarcySolve)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_MakeSample(benchmark::State& state) {
  DatasetConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(make_sample(cfg, seed++));
}
BENCHMARK(BM_MakeSample)->Unit(benchmark::kMillisecond);
