#pragma once

#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "cato/autodiff.hpp"

namespace cato {

/// Continuous rotary encoding. Channel pair (2r, 2r+1) of a head vector is rotated by
/// omega_r * p with omega_r = theta^(-2r / head_dim). Attention layers feed
/// p = position_scale * chart coordinate.
struct RopeConfig {
  std::size_t head_dim = 8;
  double theta = 10000.0;
  double position_scale = std::numbers::pi;

  void validate() const;
  double frequency(std::size_t pair) const;
};

std::vector<double> rope_apply(std::span<const double> v, double p, const RopeConfig& cfg);
double rope_score(std::span<const double> q, std::span<const double> k, double p_q, double p_k,
                  const RopeConfig& cfg);

/// Rotates every head of x [N, heads * head_dim] at per-row positions pos [N, 1]
/// (already scaled). Differentiable in both x and pos.
Var rope_rotate(const Var& x, const Var& pos, const RopeConfig& cfg);

}  // namespace cato
