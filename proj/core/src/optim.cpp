#include "cato/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cato/error.hpp"

namespace cato {

double OneCycleSchedule::lr(std::size_t step) const {
  const double lo = max_lr / div_factor;
  const std::size_t total = std::max<std::size_t>(total_steps, 1);
  const auto warm = static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total)));
  if (step >= total) return lo;
  if (step < warm) {
    return lo + (max_lr - lo) * static_cast<double>(step) / static_cast<double>(warm);
  }
  const std::size_t decay = total - warm;
  const double t = decay > 1 ? static_cast<double>(step - warm) / static_cast<double>(decay - 1) : 1.0;
  return lo + 0.5 * (max_lr - lo) * (1.0 + std::cos(std::numbers::pi * t));
}

AdamW::AdamW(AdamWConfig config, OneCycleSchedule schedule) : config_(config), schedule_(schedule) {
  if (config_.beta1 < 0 || config_.beta1 >= 1 || config_.beta2 < 0 || config_.beta2 >= 1) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (config_.eps <= 0 || config_.weight_decay < 0) throw ConfigError("AdamW eps must be > 0 and weight decay >= 0");
}

void AdamW::step(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) {
    if (p->grad.numel() != p->value.numel()) throw ConfigError("parameter '" + p->name + "' has no gradient");
  }
  const double lr = schedule_.lr(step_);
  const double t = static_cast<double>(step_ + 1);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (Parameter* p : params) {
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (inserted || mo.m.numel() != p->value.numel()) {
      mo.m = Tensor(p->value.shape(), 0.0);
      mo.v = Tensor(p->value.shape(), 0.0);
    }
    const double decay = 1.0 - lr * config_.weight_decay;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      mo.m[i] = config_.beta1 * mo.m[i] + (1.0 - config_.beta1) * g;
      mo.v[i] = config_.beta2 * mo.v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      p->value[i] = p->value[i] * decay - lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  ++step_;
}

std::size_t parameter_count(const std::vector<Parameter*>& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.numel();
  return n;
}

}  // namespace cato
