#include <benchmark/benchmark.h>

#include <numbers>

#include "cato/axial_attention.hpp"
#include "cato/flops.hpp"
#include "cato/local_operator.hpp"
#include "cato/model.hpp"
#include "cato/ops.hpp"
#include "cato/rng.hpp"

using namespace cato;

static Tensor filled(Shape s, CounterRng& rng) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// forward of one axial layer, C = 32 and 4 heads; counter reports matmul MACs
static void BM_AxialForward(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const GridShape grid{side, side};
  CounterRng rng(1);
  auto layer = AxialAttentionLayer::create(32, 4, 10000.0, std::numbers::pi, rng, "a");
  const Tensor h = filled({grid.nodes(), 32}, rng), zeta = filled({grid.nodes(), 2}, rng);
  std::uint64_t macs = 0;
  for (auto _ : state) {
    Tape t;
    flops::Scope scope;
    Var out = axial_forward(t, layer, t.constant(h), t.constant(zeta), grid);
    benchmark::DoNotOptimize(out.value().data().data());
    macs = scope.elapsed();
  }
  state.counters["macs"] = static_cast<double>(macs);
  state.counters["nodes/s"] = benchmark::Counter(static_cast<double>(grid.nodes()), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_AxialForward)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_LocalForward(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const GridShape grid{side, side};
  CounterRng rng(2);
  auto op = LocalStencil::create(32, 3, rng, "l");
  const Tensor h = filled({grid.nodes(), 32}, rng);
  for (auto _ : state) {
    Tape t;
    Var out = local_forward(t, op, t.constant(h), grid);
    benchmark::DoNotOptimize(out.value().data().data());
  }
}
BENCHMARK(BM_LocalForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

// desk model forward and backward on a 32 x 32 grid
static void BM_ModelForwardBackward(benchmark::State& state) {
  CatoConfig cfg = CatoConfig::desk();
  auto ms = ModelState::create(cfg, 3);
  const Mesh mesh = Mesh::regular(32, 32);
  CounterRng rng(4);
  const Tensor coords = mesh.coords(), feats = filled({mesh.nodes(), 1}, rng);
  auto params = ms.parameters();
  const bool backward_pass = state.range(0) != 0;
  for (auto _ : state) {
    Tape t;
    auto out = model_forward(t, ms, coords, feats, mesh.grid);
    if (backward_pass) {
      zero_grads(params);
      backward(ops::sum(out.u_hat));
    }
    benchmark::DoNotOptimize(out.u_hat.value().data().data());
  }
  state.SetLabel(backward_pass ? "forward+backward" : "forward");
}
BENCHMARK(BM_ModelForwardBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
