#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cato/datagen.hpp"
#include "cato/model.hpp"
#include "cato/physics_loss.hpp"
#include "cato/point_cloud.hpp"
#include "cato/run_config.hpp"
#include "cato/theory.hpp"

namespace cato {

struct EvalReport {
  double mean_rel_l2 = 0.0;
  std::vector<double> per_sample;
  double grad_mse = 0.0;  // mean over samples of the masked gradient MSE
  double wall_seconds = 0.0;
  std::size_t parameter_count = 0;
  std::uint64_t flop_estimate = 0;  // multiply-adds per forward pass of one sample

  std::string to_json() const;
};

struct GenerateResult {
  std::filesystem::path manifest;
  std::string digest;
};

struct TrainResult {
  ModelState model;
  std::vector<LossReport> epoch_loss;  // mean over steps of each epoch
  EvalReport final_eval;
  double wall_seconds = 0.0;
};

struct TheoryResult {
  std::vector<BoundReport> reports;
  bool all_pass = true;
};

struct PcTrainResult {
  PcModelState model;
  std::vector<double> epoch_loss;
  EvalReport final_eval;
  double wall_seconds = 0.0;
};

/// Rel-l2 and gradient MSE of a model over samples.
EvalReport evaluate(ModelState& ms, std::span<const Sample> samples, EvalMode mode = EvalMode::Model);
EvalReport evaluate_pc(PcModelState& ms, std::span<const Sample> samples);

/// Trains on an in-memory dataset. Writes checkpoints and metrics under
/// cfg.output unless `write_files` is false; `progress` receives one line per epoch.
TrainResult train(const Dataset& ds, const RunConfig& cfg, bool write_files = true, std::ostream* progress = nullptr);
PcTrainResult train_pc(const Dataset& ds, const RunConfig& cfg, bool write_files = true,
                       std::ostream* progress = nullptr);

GenerateResult cmd_generate(const RunConfig& cfg);
TrainResult cmd_train(const RunConfig& cfg, std::ostream* progress = nullptr);
EvalReport cmd_eval(const RunConfig& cfg);
TheoryResult cmd_verify_theory(const RunConfig& cfg);
PcTrainResult cmd_train_pc(const RunConfig& cfg, std::ostream* progress = nullptr);
EvalReport cmd_eval_pc(const RunConfig& cfg);

}  // namespace cato
