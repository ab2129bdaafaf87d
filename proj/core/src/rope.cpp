#include "cato/rope.hpp"

#include <cmath>

#include "cato/error.hpp"

namespace cato {

void RopeConfig::validate() const {
  if (head_dim == 0 || head_dim % 2 != 0) throw ConfigError("RoPE head dimension must be even and positive");
  if (!(theta > 0.0)) throw ConfigError("RoPE theta must be positive");
  if (!std::isfinite(position_scale)) throw ConfigError("RoPE position scale must be finite");
}

double RopeConfig::frequency(std::size_t pair) const {
  return std::pow(theta, -2.0 * static_cast<double>(pair) / static_cast<double>(head_dim));
}

std::vector<double> rope_apply(std::span<const double> v, double p, const RopeConfig& cfg) {
  if (v.size() % 2 != 0) throw ShapeError("RoPE needs an even-length vector, got " + std::to_string(v.size()));
  RopeConfig c = cfg;
  c.head_dim = v.size();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < v.size() / 2; ++r) {
    const double a = c.frequency(r) * p;
    const double cs = std::cos(a), sn = std::sin(a);
    out[2 * r] = cs * v[2 * r] - sn * v[2 * r + 1];
    out[2 * r + 1] = sn * v[2 * r] + cs * v[2 * r + 1];
  }
  return out;
}

double rope_score(std::span<const double> q, std::span<const double> k, double p_q, double p_k,
                  const RopeConfig& cfg) {
  if (q.size() != k.size()) throw ShapeError("RoPE score needs equal head dimensions");
  const auto rq = rope_apply(q, p_q, cfg);
  const auto rk = rope_apply(k, p_k, cfg);
  double s = 0.0;
  for (std::size_t i = 0; i < rq.size(); ++i) s += rq[i] * rk[i];
  return s;
}

Var rope_rotate(const Var& x, const Var& pos, const RopeConfig& cfg) {
  cfg.validate();
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) % cfg.head_dim != 0) {
    throw ShapeError("RoPE input " + shape_str(xv.shape()) + " is not a whole number of heads");
  }
  if (pos.numel() != xv.dim(0)) throw ShapeError("RoPE needs one position per row");
  const std::size_t n = xv.dim(0), c = xv.dim(1), pairs = c / 2;
  std::vector<double> freq(pairs);
  for (std::size_t r = 0; r < pairs; ++r) freq[r] = cfg.frequency(r % (cfg.head_dim / 2));

  // cos/sin of every (row, pair) angle, kept for the backward pass
  std::vector<double> cs(n * pairs), sn(n * pairs);
  const Tensor& pv = pos.value();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < pairs; ++r) {
      const double a = freq[r] * pv[i];
      const double cv = std::cos(a), sv = std::sin(a);
      cs[i * pairs + r] = cv;
      sn[i * pairs + r] = sv;
      const double x0 = xv[i * c + 2 * r], x1 = xv[i * c + 2 * r + 1];
      out[i * c + 2 * r] = cv * x0 - sv * x1;
      out[i * c + 2 * r + 1] = sv * x0 + cv * x1;
    }
  }
  return x.tape()->record(
      "rope_rotate", std::move(out), {x, pos},
      [x, pos, n, c, pairs, freq = std::move(freq), cs = std::move(cs), sn = std::move(sn)](const Tensor& g) {
        if (x.requires_grad()) {
          Tensor& gx = x.tape()->grad_buffer(x);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t r = 0; r < pairs; ++r) {
              const double cv = cs[i * pairs + r], sv = sn[i * pairs + r];
              const double g0 = g[i * c + 2 * r], g1 = g[i * c + 2 * r + 1];
              gx[i * c + 2 * r] += cv * g0 + sv * g1;
              gx[i * c + 2 * r + 1] += -sv * g0 + cv * g1;
            }
          }
        }
        if (pos.requires_grad()) {
          const Tensor& xv = x.value();
          Tensor& gp = pos.tape()->grad_buffer(pos);
          for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t r = 0; r < pairs; ++r) {
              const double cv = cs[i * pairs + r], sv = sn[i * pairs + r];
              const double x0 = xv[i * c + 2 * r], x1 = xv[i * c + 2 * r + 1];
              // d/da of the rotated pair is (-sin x0 - cos x1, cos x0 - sin x1)
              acc += freq[r] * (g[i * c + 2 * r] * (-sv * x0 - cv * x1) + g[i * c + 2 * r + 1] * (cv * x0 - sv * x1));
            }
            gp[i] += acc;
          }
        }
      });
}

}  // namespace cato
