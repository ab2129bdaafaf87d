#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cato/autodiff.hpp"
#include "cato/mesh.hpp"
#include "cato/rng.hpp"
#include "cato/rope.hpp"

namespace cato {

/// Shared Q/K/V projections with separate row and column output projections.
/// All weights are [C, C] and act on row vectors (y = h W).
struct AxialAttentionLayer {
  Parameter Wq;
  Parameter Wk;
  Parameter Wv;
  Parameter Wo_row;
  Parameter Wo_col;
  std::size_t heads = 1;
  RopeConfig rope;  // head_dim = C / heads

  static AxialAttentionLayer create(std::size_t channels, std::size_t heads, double rope_theta,
                                    double rope_scale, CounterRng& rng, const std::string& prefix);
  std::size_t channels() const { return Wq.value.dim(0); }
  void collect(std::vector<Parameter*>& out);
};

/// Softmax weights captured during a forward pass, for inspection.
/// Row weights are [H * heads, W, W]; column weights are [W * heads, H, H].
struct AttentionTrace {
  Tensor row_weights;
  Tensor col_weights;
};

/// Attention within each mesh row, positions xi [N, 1] (raw chart values).
Var row_attention(Tape& tape, AxialAttentionLayer& layer, const Var& h, const Var& xi, GridShape grid,
                  AttentionTrace* trace = nullptr);
/// Attention within each mesh column, positions eta [N, 1].
Var col_attention(Tape& tape, AxialAttentionLayer& layer, const Var& h, const Var& eta, GridShape grid,
                  AttentionTrace* trace = nullptr);
/// Row branch + column branch with projections computed once; zeta is [N, 2].
Var axial_forward(Tape& tape, AxialAttentionLayer& layer, const Var& h, const Var& zeta, GridShape grid,
                  AttentionTrace* trace = nullptr);

}  // namespace cato
