#include "cato/local_operator.hpp"

#include <cmath>

#include "cato/error.hpp"
#include "cato/init.hpp"
#include "cato/ops.hpp"

namespace cato {

LocalStencil LocalStencil::create(std::size_t channels, std::size_t kernel, CounterRng& rng,
                                  const std::string& prefix) {
  if (kernel % 2 == 0) throw ConfigError("depthwise kernel size must be odd, got " + std::to_string(kernel));
  LocalStencil st;
  Tensor k({channels, kernel, kernel});
  const double std = 1.0 / static_cast<double>(kernel);  // fan_in of a depthwise filter is k*k
  for (double& v : k.data()) v = std * rng.normal();
  st.dw_kernel = Parameter(prefix + ".dw_kernel", std::move(k));
  st.dw_bias = zeros(prefix + ".dw_bias", {channels});
  st.pw = gaussian_linear(prefix + ".pw", channels, channels, rng);
  st.pw_bias = zeros(prefix + ".pw_bias", {channels});
  return st;
}

void LocalStencil::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&dw_kernel, &dw_bias, &pw, &pw_bias}) out.push_back(p);
}

Var depthwise_conv(Tape& tape, LocalStencil& st, const Var& h, GridShape grid) {
  const std::size_t k = st.kernel();
  const std::size_t c = st.channels();
  if (k % 2 == 0) throw ShapeError("depthwise kernel size must be odd");
  if (h.value().rank() != 2 || h.dim(0) != grid.nodes() || h.dim(1) != c) {
    throw ShapeError("local operator input " + shape_str(h.shape()) + " does not match grid/channels");
  }
  const long r = static_cast<long>(k / 2);
  const long rows = static_cast<long>(grid.rows), cols = static_cast<long>(grid.cols);
  // taps[o] is the per-channel weight of kernel offset o = (di + r) * k + (dj + r)
  Var taps = ops::transpose(ops::reshape(tape.param(st.dw_kernel), {c, k * k}));
  Var acc;
  for (long di = -r; di <= r; ++di)
    for (long dj = -r; dj <= r; ++dj) {
      std::vector<long> src(grid.nodes(), -1);
      for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) {
          const long si = i + di, sj = j + dj;
          if (si >= 0 && si < rows && sj >= 0 && sj < cols) src[static_cast<std::size_t>(i * cols + j)] = si * cols + sj;
        }
      const long o = (di + r) * static_cast<long>(k) + (dj + r);
      Var w = ops::reshape(ops::index_select(taps, 0, {o}), {c});
      Var term = ops::mul(ops::index_select(h, 0, src), w);
      acc = acc.valid() ? ops::add(acc, term) : term;
    }
  return ops::add(acc, tape.param(st.dw_bias));
}

Var local_forward(Tape& tape, LocalStencil& st, const Var& h, GridShape grid) {
  Var mid = ops::gelu(depthwise_conv(tape, st, h, grid));
  return ops::add(ops::matmul(mid, tape.param(st.pw)), tape.param(st.pw_bias));
}

}  // namespace cato
