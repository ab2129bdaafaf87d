#include <benchmark/benchmark.h>

#include <vector>

#include "cato/datagen.hpp"
#include "cato/model.hpp"
#include "cato/optim.hpp"
#include "cato/physics_loss.hpp"

using namespace cato;

// one optimiser step of the desk model on a batch of 4 samples with the Darcy loss
static void BM_TrainStep(benchmark::State& state) {
  DatasetConfig dc;
  std::vector<Sample> batch;
  std::vector<MeshGradientOperator> grad_ops;
  for (std::uint64_t s = 0; s < 4; ++s) batch.push_back(make_sample(dc, s));
  for (const auto& s : batch) grad_ops.emplace_back(s.mesh);
  std::vector<Tensor> coords;
  for (const auto& s : batch) coords.push_back(s.mesh.coords());

  CatoConfig cfg = CatoConfig::desk();
  cfg.variant = state.range(0) ? ModelVariant::Cato : ModelVariant::LiftReadout;
  auto ms = ModelState::create(cfg, 1);
  auto params = ms.parameters();
  AdamW opt({}, {5e-4, 1000, 0.3, 25.0});
  const LossWeights w = LossWeights::darcy();
  for (auto _ : state) {
    Tape tape;
    std::vector<LossSample> items;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      auto o = model_forward(tape, ms, coords[k], batch[k].feats, batch[k].mesh.grid);
      items.push_back({o.u_hat, o.q_hat, &batch[k].u, &grad_ops[k]});
    }
    auto terms = total_loss(tape, items, w);
    zero_grads(params);
    backward(terms.total);
    opt.step(params);
  }
  state.SetLabel(state.range(0) ? "cato" : "lift-readout");
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch.size()));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
