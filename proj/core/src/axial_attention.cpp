#include "cato/axial_attention.hpp"

#include <cmath>

#include "cato/error.hpp"
#include "cato/init.hpp"
#include "cato/ops.hpp"

namespace cato {
namespace {

enum class Axis { Rows, Cols };

struct Projected {
  Var q, k, v;
};

void check_inputs(const AxialAttentionLayer& layer, const Var& h, GridShape grid) {
  const std::size_t c = layer.channels();
  if (layer.heads == 0 || c % layer.heads != 0) {
    throw ShapeError("channels " + std::to_string(c) + " not divisible by heads " + std::to_string(layer.heads));
  }
  if (h.value().rank() != 2 || h.dim(0) != grid.nodes() || h.dim(1) != c) {
    throw ShapeError("attention input " + shape_str(h.shape()) + " does not match grid " +
                     std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " with " + std::to_string(c) +
                     " channels");
  }
}

Projected project(Tape& tape, AxialAttentionLayer& layer, const Var& h) {
  return {ops::matmul(h, tape.param(layer.Wq)), ops::matmul(h, tape.param(layer.Wk)),
          ops::matmul(h, tape.param(layer.Wv))};
}

// [N, C] token-major -> [groups, length, head_dim] sequences along one axis.
Var to_sequences(const Var& x, GridShape grid, std::size_t heads, Axis axis) {
  const std::size_t dh = x.dim(1) / heads;
  Var v = ops::reshape(x, {grid.rows, grid.cols, heads, dh});
  if (axis == Axis::Rows) {
    v = ops::permute(v, {0, 2, 1, 3});
    return ops::reshape(v, {grid.rows * heads, grid.cols, dh});
  }
  v = ops::permute(v, {1, 2, 0, 3});
  return ops::reshape(v, {grid.cols * heads, grid.rows, dh});
}

Var from_sequences(const Var& x, GridShape grid, std::size_t heads, Axis axis) {
  const std::size_t dh = x.dim(2);
  Var v;
  if (axis == Axis::Rows) {
    v = ops::reshape(x, {grid.rows, heads, grid.cols, dh});
    v = ops::permute(v, {0, 2, 1, 3});
  } else {
    v = ops::reshape(x, {grid.cols, heads, grid.rows, dh});
    v = ops::permute(v, {2, 0, 1, 3});
  }
  return ops::reshape(v, {grid.nodes(), heads * dh});
}

Var branch(Tape& tape, AxialAttentionLayer& layer, const Projected& p, const Var& pos, GridShape grid, Axis axis,
           Tensor* weights_out) {
  if (pos.numel() != grid.nodes()) throw ShapeError("attention positions must have one value per node");
  RopeConfig rope = layer.rope;
  rope.head_dim = layer.channels() / layer.heads;
  Var scaled = ops::scale(ops::reshape(pos, {grid.nodes(), 1}), rope.position_scale);
  Var q = to_sequences(rope_rotate(p.q, scaled, rope), grid, layer.heads, axis);
  Var k = to_sequences(rope_rotate(p.k, scaled, rope), grid, layer.heads, axis);
  Var v = to_sequences(p.v, grid, layer.heads, axis);
  Var logits = ops::scale(ops::bmm(q, ops::permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(rope.head_dim)));
  Var weights = ops::softmax(logits);
  if (weights_out) *weights_out = weights.value();
  Var mixed = from_sequences(ops::bmm(weights, v), grid, layer.heads, axis);
  Parameter& wo = axis == Axis::Rows ? layer.Wo_row : layer.Wo_col;
  return ops::matmul(mixed, tape.param(wo));
}

}  // namespace

AxialAttentionLayer AxialAttentionLayer::create(std::size_t channels, std::size_t heads, double rope_theta,
                                                double rope_scale, CounterRng& rng, const std::string& prefix) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("channels " + std::to_string(channels) + " not divisible by heads " + std::to_string(heads));
  }
  AxialAttentionLayer layer;
  layer.Wq = gaussian_linear(prefix + ".Wq", channels, channels, rng);
  layer.Wk = gaussian_linear(prefix + ".Wk", channels, channels, rng);
  layer.Wv = gaussian_linear(prefix + ".Wv", channels, channels, rng);
  layer.Wo_row = gaussian_linear(prefix + ".Wo_row", channels, channels, rng);
  layer.Wo_col = gaussian_linear(prefix + ".Wo_col", channels, channels, rng);
  layer.heads = heads;
  layer.rope = RopeConfig{channels / heads, rope_theta, rope_scale};
  layer.rope.validate();
  return layer;
}

void AxialAttentionLayer::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&Wq, &Wk, &Wv, &Wo_row, &Wo_col}) out.push_back(p);
}

Var row_attention(Tape& tape, AxialAttentionLayer& layer, const Var& h, const Var& xi, GridShape grid,
                  AttentionTrace* trace) {
  check_inputs(layer, h, grid);
  return branch(tape, layer, project(tape, layer, h), xi, grid, Axis::Rows, trace ? &trace->row_weights : nullptr);
}

Var col_attention(Tape& tape, AxialAttentionLayer& layer, const Var& h, const Var& eta, GridShape grid,
                  AttentionTrace* trace) {
  check_inputs(layer, h, grid);
  return branch(tape, layer, project(tape, layer, h), eta, grid, Axis::Cols, trace ? &trace->col_weights : nullptr);
}

Var axial_forward(Tape& tape, AxialAttentionLayer& layer, const Var& h, const Var& zeta, GridShape grid,
                  AttentionTrace* trace) {
  check_inputs(layer, h, grid);
  if (zeta.value().rank() != 2 || zeta.dim(0) != grid.nodes() || zeta.dim(1) != 2) {
    throw ShapeError("chart coordinates must be [N, 2], got " + shape_str(zeta.shape()));
  }
  const Projected p = project(tape, layer, h);
  Var xi = ops::index_select(zeta, 1, {0});
  Var eta = ops::index_select(zeta, 1, {1});
  Var row = branch(tape, layer, p, xi, grid, Axis::Rows, trace ? &trace->row_weights : nullptr);
  Var col = branch(tape, layer, p, eta, grid, Axis::Cols, trace ? &trace->col_weights : nullptr);
  return ops::add(row, col);
}

}  // namespace cato
