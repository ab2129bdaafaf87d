#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "cato/datagen.hpp"
#include "cato/model.hpp"
#include "cato/physics_loss.hpp"
#include "cato/point_cloud.hpp"

namespace cato {

struct OptimConfig {
  double lr = 5e-4;  // one-cycle peak
  std::size_t batch = 4;
  std::size_t epochs = 50;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_fraction = 0.3;
  double div_factor = 25.0;
};

struct TheoryConfig {
  std::size_t grid = 8;
  double M = 1.0;
  double eps_nn = 1e-2;
  double eps_rk = 0.05;
  double delta = 0.05;
  std::size_t trials = 100;
  std::size_t samples = 256;
  std::size_t head_budget = 8;
};

enum class EvalMode { Model, Oracle, Zeros };

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::string dataset = "data/darcy";
  std::string output = "runs/default";
  std::string checkpoint;  // eval: model file; empty means <output>/model.cato
  std::size_t checkpoint_every = 10;
  std::size_t eval_every = 10;
  std::size_t limit_train = 0;  // 0 uses the whole split
  std::size_t limit_test = 0;
  EvalMode eval_mode = EvalMode::Model;
  CatoConfig model;
  LossWeights loss = LossWeights::darcy();
  OptimConfig optim;
  DatasetConfig data;
  PcConfig pc;
  TheoryConfig theory;

  void validate() const;
};

/// Parses a JSON document, rejecting unknown keys and mistyped values.
/// Missing keys keep their defaults. `loss` also accepts "darcy" or "none".
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

/// Model-only JSON used next to checkpoints.
std::string model_config_to_json(const CatoConfig& cfg);
CatoConfig model_config_from_json(const std::string& text);
std::string pc_config_to_json(const PcConfig& cfg);
PcConfig pc_config_from_json(const std::string& text);

std::string to_string(EvalMode m);

}  // namespace cato
