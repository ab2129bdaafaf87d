#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cato/autodiff.hpp"
#include "cato/mesh.hpp"
#include "cato/rng.hpp"

namespace cato {

/// Learned local stencil PWConv(GELU(DWConv(h))) with zero padding in index space.
struct LocalStencil {
  Parameter dw_kernel;  // [C, k, k]
  Parameter dw_bias;    // [C]
  Parameter pw;         // [C, C], y = x pw
  Parameter pw_bias;    // [C]

  static LocalStencil create(std::size_t channels, std::size_t kernel, CounterRng& rng, const std::string& prefix);
  std::size_t kernel() const { return dw_kernel.value.dim(1); }
  std::size_t channels() const { return pw.value.dim(0); }
  void collect(std::vector<Parameter*>& out);
};

/// Depthwise k x k convolution of h [N, C] on the grid, zero padded, plus bias.
Var depthwise_conv(Tape& tape, LocalStencil& st, const Var& h, GridShape grid);
Var local_forward(Tape& tape, LocalStencil& st, const Var& h, GridShape grid);

}  // namespace cato
