#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "cato/autodiff.hpp"

namespace cato {

/// Linear warm-up from max_lr/div_factor to max_lr, then cosine decay back to
/// max_lr/div_factor at `total_steps`.
struct OneCycleSchedule {
  double max_lr = 5e-4;
  std::size_t total_steps = 1;
  double warmup_fraction = 0.3;
  double div_factor = 25.0;

  double lr(std::size_t step) const;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Decoupled-weight-decay Adam driven by a one-cycle learning rate.
class AdamW {
 public:
  AdamW(AdamWConfig config, OneCycleSchedule schedule);

  /// Applies one update to every parameter; each must carry a populated grad.
  void step(const std::vector<Parameter*>& params);

  std::size_t steps() const { return step_; }
  double current_lr() const { return schedule_.lr(step_); }
  const AdamWConfig& config() const { return config_; }
  const OneCycleSchedule& schedule() const { return schedule_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  AdamWConfig config_;
  OneCycleSchedule schedule_;
  std::size_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

/// Sum of element counts over a parameter list.
std::size_t parameter_count(const std::vector<Parameter*>& params);

}  // namespace cato
