#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oracle {

Mat from_tensor(const cato::Tensor& t) {
  Mat m;
  if (t.rank() == 2) {
    m = Mat(t.dim(0), t.dim(1));
  } else {
    m = Mat(1, t.numel());
  }
  for (std::size_t i = 0; i < t.numel(); ++i) m.v[i] = t[i];
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("oracle matmul shape");
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Mat add_row(const Mat& a, const Mat& bias) {
  Mat c = a;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) c(i, j) += bias.v[j];
  return c;
}

Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < c.v.size(); ++i) c.v[i] += b.v[i];
  return c;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
double silu(double x) { return x / (1.0 + std::exp(-x)); }

Mat apply(const Mat& a, double (*f)(double)) {
  Mat c = a;
  for (double& x : c.v) x = f(x);
  return c;
}

Mat layer_norm(const Mat& x, const Mat& gamma, const Mat& beta, double eps) {
  Mat y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mu += x(i, j);
    mu /= static_cast<double>(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) y(i, j) = (x(i, j) - mu) / std::sqrt(var + eps) * gamma.v[j] + beta.v[j];
  }
  return y;
}

Vec softmax(const Vec& x) {
  double mx = *std::max_element(x.begin(), x.end());
  Vec e(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (e[i] = std::exp(x[i] - mx));
  for (double& v : e) v /= s;
  return e;
}

double fd_check(const std::vector<cato::Parameter*>& params, const std::function<cato::Var(cato::Tape&)>& loss,
                double h) {
  cato::Tape tape;
  cato::Var l = loss(tape);
  auto grads = tape.gradients(l);
  double worst = 0.0;
  for (cato::Parameter* p : params) {
    cato::Tensor ad(p->value.shape(), 0.0);
    for (auto& [q, g] : grads)
      if (q == p) ad = g;
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      cato::Tape tp;
      const double fp = loss(tp).value().item();
      p->value[i] = keep - h;
      cato::Tape tm;
      const double fm = loss(tm).value().item();
      p->value[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      diff = std::max(diff, std::abs(fd - ad[i]));
      scale = std::max({scale, std::abs(fd), std::abs(ad[i])});
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

namespace {

// rotate pair (x0, x1) of a head vector by angle a
void rotate(Vec& v, double pos, double theta) {
  const std::size_t dh = v.size();
  for (std::size_t r = 0; r < dh / 2; ++r) {
    const double w = std::pow(theta, -2.0 * static_cast<double>(r) / static_cast<double>(dh));
    const double c = std::cos(w * pos), s = std::sin(w * pos);
    const double x0 = v[2 * r], x1 = v[2 * r + 1];
    v[2 * r] = c * x0 - s * x1;
    v[2 * r + 1] = s * x0 + c * x1;
  }
}

Vec head_slice(const Mat& m, std::size_t row, std::size_t head, std::size_t dh) {
  return Vec(m.v.begin() + static_cast<long>(row * m.cols + head * dh),
             m.v.begin() + static_cast<long>(row * m.cols + (head + 1) * dh));
}

}  // namespace

Mat naive_axial_mix(const Mat& h, const Mat& Wq, const Mat& Wk, const Mat& Wv, const Vec& pos, cato::GridShape grid,
                    std::size_t heads, double theta, int axis) {
  const Mat q = matmul(h, Wq), k = matmul(h, Wk), v = matmul(h, Wv);
  const std::size_t c = h.cols, dh = c / heads;
  Mat out(h.rows, c);
  const std::size_t lines = axis == 0 ? grid.rows : grid.cols;
  const std::size_t len = axis == 0 ? grid.cols : grid.rows;
  auto node = [&](std::size_t line, std::size_t t) { return axis == 0 ? line * grid.cols + t : t * grid.cols + line; };
  for (std::size_t line = 0; line < lines; ++line)
    for (std::size_t m = 0; m < heads; ++m)
      for (std::size_t a = 0; a < len; ++a) {
        const std::size_t na = node(line, a);
        Vec qa = head_slice(q, na, m, dh);
        rotate(qa, pos[na], theta);
        Vec scores(len);
        for (std::size_t b = 0; b < len; ++b) {
          const std::size_t nb = node(line, b);
          Vec kb = head_slice(k, nb, m, dh);
          rotate(kb, pos[nb], theta);
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qa[d] * kb[d];
          scores[b] = s / std::sqrt(static_cast<double>(dh));
        }
        const Vec w = softmax(scores);
        for (std::size_t b = 0; b < len; ++b) {
          const std::size_t nb = node(line, b);
          for (std::size_t d = 0; d < dh; ++d) out(na, m * dh + d) += w[b] * v(nb, m * dh + d);
        }
      }
  return out;
}

Mat naive_depthwise(const Mat& h, const cato::Tensor& kernel, const cato::Tensor& bias, cato::GridShape grid) {
  const std::size_t c = h.cols, k = kernel.dim(1);
  const long r = static_cast<long>(k / 2);
  Mat out(h.rows, c);
  for (long i = 0; i < static_cast<long>(grid.rows); ++i)
    for (long j = 0; j < static_cast<long>(grid.cols); ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = bias[ch];
        for (long a = 0; a < static_cast<long>(k); ++a)
          for (long b = 0; b < static_cast<long>(k); ++b) {
            const long si = i + a - r, sj = j + b - r;
            if (si < 0 || sj < 0 || si >= static_cast<long>(grid.rows) || sj >= static_cast<long>(grid.cols)) continue;
            s += kernel[(ch * k + static_cast<std::size_t>(a)) * k + static_cast<std::size_t>(b)] *
                 h(static_cast<std::size_t>(si) * grid.cols + static_cast<std::size_t>(sj), ch);
          }
        out(static_cast<std::size_t>(i) * grid.cols + static_cast<std::size_t>(j), ch) = s;
      }
  return out;
}

namespace {

Mat P(const cato::Parameter& p) { return from_tensor(p.value); }

Mat mlp(const cato::Mlp& m, const Mat& x) {
  Mat hid = apply(add_row(matmul(x, P(m.W1)), P(m.b1)), gelu);
  return add_row(matmul(hid, P(m.W2)), P(m.b2));
}

Mat ln(const cato::LayerNormParams& p, const Mat& x, const cato::CatoConfig& cfg) {
  if (cfg.core) return x;
  return layer_norm(x, P(p.gamma), P(p.beta), cfg.ln_eps);
}

Mat chart(const cato::ChartNet& net, const Mat& x) {
  Mat h = apply(add_row(matmul(x, P(net.V1)), P(net.c1)), silu);
  return apply(add_row(matmul(h, P(net.V2)), P(net.c2)), [](double v) { return std::tanh(v); });
}

}  // namespace

ModelOut straight_line_model(const cato::ModelState& ms, const cato::Tensor& coords, const cato::Tensor& feats,
                             cato::GridShape grid) {
  const cato::CatoConfig& cfg = ms.config;
  const std::size_t n = grid.nodes();
  const Mat x = from_tensor(coords);
  Mat in(n, 2 + cfg.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    in(i, 0) = x(i, 0);
    in(i, 1) = x(i, 1);
    for (std::size_t f = 0; f < cfg.feature_dim; ++f) in(i, 2 + f) = feats.at(i, f);
  }
  Mat h = mlp(ms.lift, in);
  ModelOut out;
  if (cfg.variant == cato::ModelVariant::Cato) {
    out.zeta = chart(ms.chart, x);
    Vec xi(n), eta(n);
    for (std::size_t i = 0; i < n; ++i) {
      xi[i] = cfg.rope_scale * out.zeta(i, 0);
      eta[i] = cfg.rope_scale * out.zeta(i, 1);
    }
    for (const auto& b : ms.blocks) {
      const Mat nrm = ln(b.ln1, h, cfg);
      const Mat row = naive_axial_mix(nrm, P(b.attn.Wq), P(b.attn.Wk), P(b.attn.Wv), xi, grid, cfg.heads,
                                      cfg.rope_theta, 0);
      const Mat col = naive_axial_mix(nrm, P(b.attn.Wq), P(b.attn.Wk), P(b.attn.Wv), eta, grid, cfg.heads,
                                      cfg.rope_theta, 1);
      Mat mixed = add(h, add(matmul(row, P(b.attn.Wo_row)), matmul(col, P(b.attn.Wo_col))));
      if (!cfg.core) {
        Mat dw = apply(naive_depthwise(nrm, b.local.dw_kernel.value, b.local.dw_bias.value, grid), gelu);
        mixed = add(mixed, add_row(matmul(dw, P(b.local.pw)), P(b.local.pw_bias)));
      }
      h = add(mixed, mlp(b.mlp, ln(b.ln2, mixed, cfg)));
    }
  }
  h = ln(ms.final_ln, h, cfg);
  out.u_hat = add_row(matmul(h, P(ms.readout.w_u)), P(ms.readout.b_u));
  out.q_hat = add_row(matmul(h, P(ms.readout.W_q)), P(ms.readout.b_q));
  return out;
}

Vec naive_apply_T(const cato::AxialOperatorSpec& spec, const cato::ChartCoords& z, const Vec& f, cato::GridShape grid) {
  const std::size_t H = grid.rows, W = grid.cols;
  Vec out(H * W, 0.0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t n = i * W + j;
      double v = spec.ell(z.xi[n], z.eta[n]) * f[n];
      for (std::size_t r = 0; r < spec.a.size(); ++r) {
        double s = 0.0;
        for (std::size_t p = 0; p < W; ++p) {
          const std::size_t m = i * W + p;
          s += spec.b[r](z.xi[m], z.eta[m]) * f[m];
        }
        v += spec.a[r](z.xi[n], z.eta[n]) * s / static_cast<double>(W);
      }
      for (std::size_t s_ = 0; s_ < spec.c.size(); ++s_) {
        double s = 0.0;
        for (std::size_t p = 0; p < H; ++p) {
          const std::size_t m = p * W + j;
          s += spec.d[s_](z.xi[m], z.eta[m]) * f[m];
        }
        v += spec.c[s_](z.xi[n], z.eta[n]) * s / static_cast<double>(H);
      }
      out[n] = v;
    }
  return out;
}

std::vector<std::vector<long>> brute_knn(const cato::Tensor& coords, std::size_t k) {
  const std::size_t n = coords.dim(0);
  std::vector<std::vector<long>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, long>> all;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = coords.at(j, 0) - coords.at(i, 0), dy = coords.at(j, 1) - coords.at(i, 1);
      all.emplace_back(dx * dx + dy * dy, static_cast<long>(j));
    }
    std::sort(all.begin(), all.end());
    for (std::size_t s = 0; s < k; ++s) out[i].push_back(all[s].second);
  }
  return out;
}

Mat naive_pc_local(cato::PcLocal& local, const Mat& h, const Mat& coords, const Mat& zeta, std::size_t k) {
  const std::size_t n = h.rows, c = h.cols;
  cato::Tensor ct({n, 2}, coords.v);
  const auto nb = brute_knn(ct, k);
  const Mat Wc = P(local.Wc), Wd = P(local.Wd), ws = P(local.ws), Wout = P(local.Wout), bout = P(local.bout);
  Mat out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    Mat msgs(k, c);
    Vec score(k);
    for (std::size_t s = 0; s < k; ++s) {
      const auto j = static_cast<std::size_t>(nb[i][s]);
      Mat hi(1, c), dh(1, c), g(1, 5);
      for (std::size_t ch = 0; ch < c; ++ch) {
        hi(0, ch) = h(i, ch);
        dh(0, ch) = h(j, ch) - h(i, ch);
      }
      const double dx = coords(j, 0) - coords(i, 0), dy = coords(j, 1) - coords(i, 1);
      g(0, 0) = dx;
      g(0, 1) = dy;
      g(0, 2) = std::sqrt(dx * dx + dy * dy);
      g(0, 3) = zeta(j, 0) - zeta(i, 0);
      g(0, 4) = zeta(j, 1) - zeta(i, 1);
      Mat m = apply(add(add(matmul(hi, Wc), matmul(dh, Wd)), mlp(local.geo, g)), gelu);
      for (std::size_t ch = 0; ch < c; ++ch) msgs(s, ch) = m(0, ch);
      score[s] = matmul(m, ws)(0, 0) / std::sqrt(static_cast<double>(c));
    }
    const Vec a = softmax(score);
    Mat cat(1, 2 * c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double soft = 0.0, hard = msgs(0, ch);
      for (std::size_t s = 0; s < k; ++s) {
        soft += a[s] * msgs(s, ch);
        hard = std::max(hard, msgs(s, ch));
      }
      cat(0, ch) = soft;
      cat(0, c + ch) = hard;
    }
    const Mat o = add_row(matmul(cat, Wout), bout);
    for (std::size_t ch = 0; ch < c; ++ch) out(i, ch) = o(0, ch);
  }
  return out;
}

ModelOut naive_pc_model(cato::PcModelState& ms, const cato::PointCloud& pc) {
  const cato::PcConfig& cfg = ms.config;
  const std::size_t n = pc.size(), df = pc.feature_dim(), c = cfg.embed_dim, m = cfg.heads, dh = c / m;
  // processing order: lexicographic on (x, y, feats), index last
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    std::vector<double> ka{pc.coords.at(a, 0), pc.coords.at(a, 1)}, kb{pc.coords.at(b, 0), pc.coords.at(b, 1)};
    for (std::size_t f = 0; f < df; ++f) {
      ka.push_back(pc.feats.at(a, f));
      kb.push_back(pc.feats.at(b, f));
    }
    if (ka != kb) return ka < kb;
    return a < b;
  });
  Mat x(n, 2), in(n, 2 + df + 2);
  for (std::size_t r = 0; r < n; ++r) {
    x(r, 0) = pc.coords.at(order[r], 0);
    x(r, 1) = pc.coords.at(order[r], 1);
  }
  const Mat zeta = chart(ms.chart, x);
  for (std::size_t r = 0; r < n; ++r) {
    in(r, 0) = x(r, 0);
    in(r, 1) = x(r, 1);
    for (std::size_t f = 0; f < df; ++f) in(r, 2 + f) = pc.feats.at(order[r], f);
    in(r, 2 + df) = zeta(r, 0);
    in(r, 3 + df) = zeta(r, 1);
  }
  Mat h = add(mlp(ms.lift, in), add_row(matmul(zeta, P(ms.Wcb)), P(ms.bcb)));
  auto lnp = [&](const cato::LayerNormParams& p, const Mat& v) {
    return layer_norm(v, P(p.gamma), P(p.beta), cfg.ln_eps);
  };
  auto gated = [&](const Mat& base, const cato::Parameter& gamma, const Mat& upd) {
    Mat o = base;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) o(r, ch) += gamma.value[ch] * upd(r, ch);
    return o;
  };
  for (auto& b : ms.blocks) {
    const Mat a_in = lnp(b.ln1, h);
    const Mat q = matmul(a_in, P(b.attn.Wq)), k = matmul(a_in, P(b.attn.Wk)), v = matmul(a_in, P(b.attn.Wv));
    const Mat Wb = P(b.attn.Wb);
    Mat mixed(n, c);
    for (std::size_t head = 0; head < m; ++head)
      for (std::size_t i = 0; i < n; ++i) {
        Vec s(n);
        for (std::size_t j = 0; j < n; ++j) {
          double dot = 0.0;
          for (std::size_t d = 0; d < dh; ++d) dot += q(i, head * dh + d) * k(j, head * dh + d);
          double bias = 0.0;
          for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t r = 0; r < 2; ++r) bias += zeta(i, p) * Wb(p, r) * zeta(j, r);
          s[j] = dot / std::sqrt(static_cast<double>(dh)) + bias;
        }
        const Vec w = softmax(s);
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t d = 0; d < dh; ++d) mixed(i, head * dh + d) += w[j] * v(j, head * dh + d);
      }
    h = gated(h, b.gamma_attn, matmul(mixed, P(b.attn.Wo)));
    h = gated(h, b.gamma_local, naive_pc_local(b.local, lnp(b.ln2, h), x, zeta, cfg.knn));
    h = gated(h, b.gamma_mlp, mlp(b.mlp, lnp(b.ln3, h)));
  }
  h = lnp(ms.final_ln, h);
  const Mat u = add_row(matmul(h, P(ms.w_u)), P(ms.b_u));
  const Mat q = add_row(matmul(h, P(ms.W_q)), P(ms.b_q));
  ModelOut out{Mat(n, 1), Mat(n, 2), Mat(n, 2)};
  for (std::size_t r = 0; r < n; ++r) {
    out.u_hat(order[r], 0) = u(r, 0);
    for (std::size_t d = 0; d < 2; ++d) {
      out.q_hat(order[r], d) = q(r, d);
      out.zeta(order[r], d) = zeta(r, d);
    }
  }
  return out;
}

cato::Tensor random_tensor(cato::Shape shape, cato::CounterRng& rng, double lo, double hi) {
  cato::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracle
