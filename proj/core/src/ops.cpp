#include "cato/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "cato/error.hpp"
#include "cato/flops.hpp"

namespace cato::flops {
namespace {
thread_local std::uint64_t g_macs = 0;
}
void add(std::uint64_t macs) { g_macs += macs; }
std::uint64_t count() { return g_macs; }
void reset() { g_macs = 0; }
}  // namespace cato::flops

namespace cato::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.tape() || a.tape() != b.tape()) throw ShapeError("operands live on different tapes");
  return *a.tape();
}

template <class F>
void accumulate(const Var& v, F&& fn) {
  if (!v.requires_grad()) return;
  fn(v.tape()->grad_buffer(v));
}

/// Number of broadcast repetitions of `b` over `a`, or throws.
std::size_t broadcast_outer(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return 1;
  if (b.size() <= a.size() && std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    return shape_numel(a) / std::max<std::size_t>(shape_numel(b), 1);
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const auto m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  MapM(out.data().data(), m, n).noalias() = MapC(av.data().data(), m, k) * MapC(bv.data().data(), k, n);
  flops::add(static_cast<std::uint64_t>(m) * k * n);
  return tape.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g) {
    MapC gm(g.data().data(), m, n);
    accumulate(a, [&](Tensor& ga) {
      MapM(ga.data().data(), m, k).noalias() += gm * MapC(b.value().data().data(), k, n).transpose();
    });
    accumulate(b, [&](Tensor& gb) {
      MapM(gb.data().data(), k, n).noalias() += MapC(a.value().data().data(), m, k).transpose() * gm;
    });
  });
}

Var bmm(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1)) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const auto bs = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(2);
  Tensor out({bs, m, n});
  for (std::size_t s = 0; s < bs; ++s) {
    MapM(out.data().data() + s * m * n, m, n).noalias() =
        MapC(av.data().data() + s * m * k, m, k) * MapC(bv.data().data() + s * k * n, k, n);
  }
  flops::add(static_cast<std::uint64_t>(bs) * m * k * n);
  return tape.record("bmm", std::move(out), {a, b}, [a, b, bs, m, k, n](const Tensor& g) {
    accumulate(a, [&](Tensor& ga) {
      const double* bp = b.value().data().data();
      for (std::size_t s = 0; s < bs; ++s) {
        MapM(ga.data().data() + s * m * k, m, k).noalias() +=
            MapC(g.data().data() + s * m * n, m, n) * MapC(bp + s * k * n, k, n).transpose();
      }
    });
    accumulate(b, [&](Tensor& gb) {
      const double* ap = a.value().data().data();
      for (std::size_t s = 0; s < bs; ++s) {
        MapM(gb.data().data() + s * k * n, k, n).noalias() +=
            MapC(ap + s * m * k, m, k).transpose() * MapC(g.data().data() + s * m * n, m, n);
      }
    });
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t outer = broadcast_outer(av.shape(), bv.shape(), "add");
  const std::size_t inner = bv.numel();
  Tensor out = av;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += bv[i];
  return tape.record("add", std::move(out), {a, b}, [a, b, outer, inner](const Tensor& g) {
    accumulate(a, [&](Tensor& ga) { ga += g; });
    accumulate(b, [&](Tensor& gb) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gb[i] += g[o * inner + i];
    });
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t outer = broadcast_outer(av.shape(), bv.shape(), "sub");
  const std::size_t inner = bv.numel();
  Tensor out = av;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] -= bv[i];
  return tape.record("sub", std::move(out), {a, b}, [a, b, outer, inner](const Tensor& g) {
    accumulate(a, [&](Tensor& ga) { ga += g; });
    accumulate(b, [&](Tensor& gb) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gb[i] -= g[o * inner + i];
    });
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t outer = broadcast_outer(av.shape(), bv.shape(), "mul");
  const std::size_t inner = bv.numel();
  Tensor out = av;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] *= bv[i];
  return tape.record("mul", std::move(out), {a, b}, [a, b, outer, inner](const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    accumulate(a, [&](Tensor& ga) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) ga[o * inner + i] += g[o * inner + i] * bv[i];
    });
    accumulate(b, [&](Tensor& gb) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gb[i] += g[o * inner + i] * av[o * inner + i];
    });
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  out *= s;
  return x.tape()->record("scale", std::move(out), {x}, [x, s](const Tensor& g) {
    accumulate(x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += s * g[i];
    });
  });
}

Var add_scalar(const Var& x, double s) {
  Tensor out = x.value();
  for (double& v : out.data()) v += s;
  return x.tape()->record("add_scalar", std::move(out), {x},
                          [x](const Tensor& g) { accumulate(x, [&](Tensor& gx) { gx += g; }); });
}

namespace {

// Elementwise op whose derivative is a function of (input, output).
template <class Fwd, class Deriv>
Var pointwise(const char* name, const Var& x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = fwd(xv[i]);
  Tape& tape = *x.tape();
  const std::size_t out_id = tape.size();
  return tape.record(name, std::move(out), {x}, [x, &tape, out_id, deriv](const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& yv = tape.value_of(out_id);
    accumulate(x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
    });
  });
}

double gelu_fwd(double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); }
double gelu_grad(double v) {
  const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + v * pdf;
}
double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Var tanh(const Var& x) {
  return pointwise("tanh", x, [](double v) { return std::tanh(v); },
                   [](double, double y) { return 1.0 - y * y; });
}

Var silu(const Var& x) {
  return pointwise("silu", x, [](double v) { return v * sigmoid(v); },
                   [](double v, double) {
                     const double s = sigmoid(v);
                     return s * (1.0 + v * (1.0 - s));
                   });
}

Var gelu(const Var& x) {
  return pointwise("gelu", x, gelu_fwd, [](double v, double) { return gelu_grad(v); });
}

Var sin(const Var& x) {
  return pointwise("sin", x, [](double v) { return std::sin(v); },
                   [](double v, double) { return std::cos(v); });
}

Var cos(const Var& x) {
  return pointwise("cos", x, [](double v) { return std::cos(v); },
                   [](double v, double) { return -std::sin(v); });
}

Var square(const Var& x) {
  return pointwise("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var sqrt(const Var& x) {
  for (double v : x.value().data()) {
    if (v < 0.0) throw NumericError("sqrt of negative value");
  }
  // Subgradient 0 at the origin keeps norms of exact matches differentiable.
  return pointwise("sqrt", x, [](double v) { return std::sqrt(v); },
                   [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var softmax(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("softmax of a scalar");
  const std::size_t n = xv.shape().back();
  const std::size_t rows = xv.numel() / std::max<std::size_t>(n, 1);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < n; ++i) o[i] /= s;
  }
  Tape& tape = *x.tape();
  const std::size_t out_id = tape.size();
  return tape.record("softmax", std::move(out), {x}, [x, &tape, out_id, rows, n](const Tensor& g) {
    const Tensor& y = tape.value_of(out_id);
    accumulate(x, [&](Tensor& gx) {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += g[base + i] * y[base + i];
        for (std::size_t i = 0; i < n; ++i) gx[base + i] += y[base + i] * (g[base + i] - dot);
      }
    });
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  Tape& tape = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  const std::size_t c = xv.rank() ? xv.shape().back() : 0;
  if (c == 0 || gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("layer_norm: channel mismatch for " + shape_str(xv.shape()));
  }
  const std::size_t rows = xv.numel() / c;
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * c;
    double mu = 0.0;
    for (std::size_t i = 0; i < c; ++i) mu += in[i];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < c; ++i) xhat[r * c + i] = (in[i] - mu) * inv_std[r];
  }
  Tensor out(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < c; ++i) out[r * c + i] = gv[i] * xhat[r * c + i] + bv[i];

  return tape.record("layer_norm", std::move(out), {x, gamma, beta},
                     [x, gamma, beta, rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& g) {
                       const Tensor& gv = gamma.value();
                       accumulate(gamma, [&](Tensor& gg) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < c; ++i) gg[i] += g[r * c + i] * xhat[r * c + i];
                       });
                       accumulate(beta, [&](Tensor& gb) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < c; ++i) gb[i] += g[r * c + i];
                       });
                       accumulate(x, [&](Tensor& gx) {
                         const double inv_c = 1.0 / static_cast<double>(c);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double mean_g = 0.0, mean_gx = 0.0;
                           for (std::size_t i = 0; i < c; ++i) {
                             const double gh = g[r * c + i] * gv[i];
                             mean_g += gh;
                             mean_gx += gh * xhat[r * c + i];
                           }
                           mean_g *= inv_c;
                           mean_gx *= inv_c;
                           for (std::size_t i = 0; i < c; ++i) {
                             const double gh = g[r * c + i] * gv[i];
                             gx[r * c + i] += inv_std[r] * (gh - mean_g - xhat[r * c + i] * mean_gx);
                           }
                         }
                       });
                     });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape()->record("reshape", std::move(out), {x},
                          [x](const Tensor& g) { accumulate(x, [&](Tensor& gx) { gx += g; }); });
}

Var permute(const Var& x, const std::vector<std::size_t>& axes) {
  const Tensor& xv = x.value();
  const std::size_t rank = xv.rank();
  if (axes.size() != rank) throw ShapeError("permute: axis count mismatch for " + shape_str(xv.shape()));
  std::vector<bool> seen(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("permute: invalid axis list");
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * xv.shape()[i];
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = xv.shape()[axes[i]];

  // walks the output in order; calls fn(out_offset, in_offset)
  auto walk = [rank, in_stride, axes, out_shape](auto&& fn) {
    const std::size_t n = shape_numel(out_shape);
    if (n == 0) return;
    std::vector<std::size_t> step(rank), idx(rank, 0);
    for (std::size_t i = 0; i < rank; ++i) step[i] = in_stride[axes[i]];
    const std::size_t inner = rank ? out_shape[rank - 1] : 1;
    const std::size_t inner_step = rank ? step[rank - 1] : 0;
    std::size_t off = 0;
    for (std::size_t o = 0; o < n; o += inner) {
      for (std::size_t j = 0; j < inner; ++j) fn(o + j, off + j * inner_step);
      for (std::size_t i = rank ? rank - 1 : 0; i-- > 0;) {
        off += step[i];
        if (++idx[i] < out_shape[i]) break;
        off -= step[i] * out_shape[i];
        idx[i] = 0;
      }
    }
  };
  Tensor out(out_shape);
  walk([&](std::size_t o, std::size_t src) { out[o] = xv[src]; });
  return x.tape()->record("permute", std::move(out), {x}, [x, walk](const Tensor& g) {
    accumulate(x, [&](Tensor& gx) { walk([&](std::size_t o, std::size_t src) { gx[src] += g[o]; }); });
  });
}

Var transpose(const Var& x) {
  if (x.value().rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Var index_select(const Var& x, std::size_t axis, const std::vector<long>& index) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) throw ShapeError("index_select: axis out of range for " + shape_str(xv.shape()));
  const std::size_t n_in = xv.shape()[axis];
  for (long i : index) {
    if (i < -1 || i >= static_cast<long>(n_in)) {
      throw ShapeError("index_select: index " + std::to_string(i) + " out of range " + std::to_string(n_in));
    }
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.shape()[i];
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.shape()[i];
  Shape out_shape = xv.shape();
  out_shape[axis] = index.size();
  const std::size_t n_out = index.size();
  Tensor out(out_shape, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n_out; ++k) {
      if (index[k] < 0) continue;
      const double* s = xv.data().data() + (o * n_in + static_cast<std::size_t>(index[k])) * inner;
      std::copy(s, s + inner, out.data().data() + (o * n_out + k) * inner);
    }
  return x.tape()->record("index_select", std::move(out), {x},
                          [x, index, outer, inner, n_in, n_out](const Tensor& g) {
                            accumulate(x, [&](Tensor& gx) {
                              for (std::size_t o = 0; o < outer; ++o)
                                for (std::size_t k = 0; k < n_out; ++k) {
                                  if (index[k] < 0) continue;
                                  double* d = gx.data().data() + (o * n_in + static_cast<std::size_t>(index[k])) * inner;
                                  const double* s = g.data().data() + (o * n_out + k) * inner;
                                  for (std::size_t i = 0; i < inner; ++i) d[i] += s[i];
                                }
                            });
                          });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ShapeError("concat of scalars");
  const std::size_t rows = parts.front().numel() / first.back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw ShapeError("concat: leading shapes differ (" + shape_str(first) + " vs " + shape_str(s) + ")");
    }
    widths.push_back(s.back());
    total += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data().data() + r * widths[p], widths[p], out.data().data() + r * total + col);
    col += widths[p];
  }
  return parts.front().tape()->record("concat", std::move(out), parts,
                                      [parts, widths, rows, total](const Tensor& g) {
                                        std::size_t col = 0;
                                        for (std::size_t p = 0; p < parts.size(); ++p) {
                                          accumulate(parts[p], [&](Tensor& gp) {
                                            for (std::size_t r = 0; r < rows; ++r)
                                              for (std::size_t i = 0; i < widths[p]; ++i)
                                                gp[r * widths[p] + i] += g[r * total + col + i];
                                          });
                                          col += widths[p];
                                        }
                                      });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape()->record("sum", Tensor::scalar(s), {x}, [x](const Tensor& g) {
    accumulate(x, [&](Tensor& gx) {
      for (double& v : gx.data()) v += g[0];
    });
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var max_axis1(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) == 0) throw ShapeError("max_axis1 expects non-empty rank 3, got " + shape_str(xv.shape()));
  const std::size_t a = xv.dim(0), b = xv.dim(1), c = xv.dim(2);
  Tensor out({a, c});
  std::vector<std::size_t> arg(a * c);
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      std::size_t best = 0;
      double bv = xv[(i * b) * c + k];
      for (std::size_t j = 1; j < b; ++j) {
        const double v = xv[(i * b + j) * c + k];
        if (v > bv) {
          bv = v;
          best = j;
        }
      }
      out[i * c + k] = bv;
      arg[i * c + k] = (i * b + best) * c + k;
    }
  return x.tape()->record("max_axis1", std::move(out), {x}, [x, arg = std::move(arg)](const Tensor& g) {
    accumulate(x, [&](Tensor& gx) {
      for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
    });
  });
}

}  // namespace cato::ops
