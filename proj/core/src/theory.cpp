#include "cato/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "json.hpp"

#include "cato/error.hpp"
#include "cato/init.hpp"

namespace cato {

// ---------------------------------------------------------------- polynomials

double Poly2::operator()(double xi, double eta) const {
  double out = 0.0;
  double xp = 1.0;
  for (int p = 0; p < 4; ++p) {
    double yq = 1.0;
    for (int q = 0; q < 4; ++q) {
      out += c[p * 4 + q] * xp * yq;
      yq *= eta;
    }
    xp *= xi;
  }
  return out;
}

double Poly2::sup_bound() const {
  double s = 0.0;
  for (double v : c) s += std::abs(v);
  return s;
}

double Poly2::lipschitz() const {
  double gx = 0.0, gy = 0.0;
  for (int p = 0; p < 4; ++p) {
    for (int q = 0; q < 4; ++q) {
      gx += p * std::abs(c[p * 4 + q]);
      gy += q * std::abs(c[p * 4 + q]);
    }
  }
  return std::hypot(gx, gy);
}

Poly2 Poly2::constant(double v) {
  Poly2 g;
  g.c[0] = v;
  return g;
}

Poly2 Poly2::xi() {
  Poly2 g;
  g.c[4] = 1.0;
  return g;
}

Poly2 Poly2::eta() {
  Poly2 g;
  g.c[1] = 1.0;
  return g;
}

Poly2 Poly2::random(CounterRng& rng, double l1) {
  Poly2 g;
  for (int p = 0; p < 4; ++p) {
    for (int q = 0; p + q < 4; ++q) g.c[p * 4 + q] = rng.uniform(-1.0, 1.0);
  }
  const double s = g.sup_bound();
  if (s > 0.0) {
    for (double& v : g.c) v *= l1 / s;
  }
  return g;
}

// ------------------------------------------------------------------ operators

void AxialOperatorSpec::validate() const {
  if (a.size() != b.size()) throw ConfigError("row coefficient lists a and b differ in length");
  if (c.size() != d.size()) throw ConfigError("column coefficient lists c and d differ in length");
}

double AxialOperatorSpec::c_chart() const {
  double s = ell.lipschitz();
  for (std::size_t r = 0; r < a.size(); ++r) s += a[r].lipschitz() * b[r].sup_bound() + a[r].sup_bound() * b[r].lipschitz();
  for (std::size_t q = 0; q < c.size(); ++q) s += c[q].lipschitz() * d[q].sup_bound() + c[q].sup_bound() * d[q].lipschitz();
  return s;
}

AxialOperatorSpec AxialOperatorSpec::identity() {
  AxialOperatorSpec s;
  s.name = "identity";
  s.ell = Poly2::constant(1.0);
  return s;
}

AxialOperatorSpec AxialOperatorSpec::row_mean() {
  AxialOperatorSpec s;
  s.name = "row-mean";
  s.a = {Poly2::constant(1.0)};
  s.b = {Poly2::constant(1.0)};
  return s;
}

AxialOperatorSpec AxialOperatorSpec::linear_chart() {
  AxialOperatorSpec s;
  s.name = "linear-chart";
  s.a = {Poly2::xi()};
  s.b = {Poly2::constant(1.0)};
  return s;
}

AxialOperatorSpec AxialOperatorSpec::polynomial(std::uint64_t seed) {
  CounterRng rng(seed);
  AxialOperatorSpec s;
  s.name = "polynomial";
  for (int r = 0; r < 2; ++r) {
    s.a.push_back(Poly2::random(rng, 1.0));
    s.b.push_back(Poly2::random(rng, 1.0));
    s.c.push_back(Poly2::random(rng, 1.0));
    s.d.push_back(Poly2::random(rng, 1.0));
  }
  s.ell = Poly2::random(rng, 1.0);
  return s;
}

std::vector<double> apply_T(const AxialOperatorSpec& spec, const ChartCoords& zeta, std::span<const double> f,
                            GridShape grid) {
  spec.validate();
  const std::size_t H = grid.rows, W = grid.cols, n = grid.nodes();
  if (zeta.size() != n || f.size() != n) throw ShapeError("apply_T: chart or field does not match the grid");
  std::vector<double> out(n, 0.0);
  auto xi = [&](std::size_t k) { return zeta.xi[k]; };
  auto eta = [&](std::size_t k) { return zeta.eta[k]; };
  for (std::size_t r = 0; r < spec.rank_xi(); ++r) {
    for (std::size_t i = 0; i < H; ++i) {
      double m = 0.0;
      for (std::size_t t = 0; t < W; ++t) {
        const std::size_t k = i * W + t;
        m += spec.b[r](xi(k), eta(k)) * f[k];
      }
      m /= static_cast<double>(W);
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t k = i * W + j;
        out[k] += spec.a[r](xi(k), eta(k)) * m;
      }
    }
  }
  for (std::size_t s = 0; s < spec.rank_eta(); ++s) {
    for (std::size_t j = 0; j < W; ++j) {
      double m = 0.0;
      for (std::size_t p = 0; p < H; ++p) {
        const std::size_t k = p * W + j;
        m += spec.d[s](xi(k), eta(k)) * f[k];
      }
      m /= static_cast<double>(H);
      for (std::size_t i = 0; i < H; ++i) {
        const std::size_t k = i * W + j;
        out[k] += spec.c[s](xi(k), eta(k)) * m;
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) out[k] += spec.ell(xi(k), eta(k)) * f[k];
  return out;
}

std::string BoundReport::to_json() const {
  nlohmann::json j = {{"name", name},       {"measured", measured}, {"bound", bound},   {"margin", margin},
                      {"samples", samples}, {"M", M},               {"delta", delta},   {"eps_rk", eps_rk},
                      {"eps_nn", eps_nn},   {"c_chart", c_chart},   {"pass", pass}};
  return j.dump();
}

// ------------------------------------------------------------------- lemma 1

namespace {

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2)); }

double gelu_prime(double z) {
  const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + z * pdf;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double diff_norm(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

Lemma1Layout make_layout(const AxialOperatorSpec& spec, std::size_t head_budget) {
  const std::size_t rx = spec.rank_xi(), re = spec.rank_eta();
  Lemma1Layout L;
  L.heads = std::max<std::size_t>(1, rx + re);
  if (rx + re > head_budget) {
    throw ConfigError("ranks " + std::to_string(rx) + " + " + std::to_string(re) + " exceed the head budget " +
                      std::to_string(head_budget));
  }
  const std::size_t needed = 3 * (rx + re) + 3;
  std::size_t dh = (needed + L.heads - 1) / L.heads;
  dh += dh % 2;
  L.channels = L.heads * dh;
  // U_r and V_s open their own head; every other channel takes the next free slot.
  std::vector<bool> used(L.channels, false);
  for (std::size_t r = 0; r < rx; ++r) {
    L.U.push_back(r * dh);
    used[r * dh] = true;
  }
  for (std::size_t s = 0; s < re; ++s) {
    L.V.push_back((rx + s) * dh);
    used[(rx + s) * dh] = true;
  }
  std::size_t next = 0;
  auto take = [&] {
    while (used[next]) ++next;
    used[next] = true;
    return next;
  };
  for (std::size_t r = 0; r < rx; ++r) L.P.push_back(take());
  for (std::size_t r = 0; r < rx; ++r) L.M.push_back(take());
  for (std::size_t s = 0; s < re; ++s) L.Q.push_back(take());
  for (std::size_t s = 0; s < re; ++s) L.N.push_back(take());
  L.Lambda = take();
  L.Z = take();
  L.O = take();
  return L;
}

struct ChannelTarget {
  std::size_t channel;
  std::vector<double> values;  // per node
  bool times_f;
};

void zero_all(ModelState& ms) {
  for (Parameter* p : ms.parameters()) p->value.fill(0.0);
}

// Fits the lift's output layer for width F; returns the certified max error.
double fit_lift(ModelState& ms, const Mesh& mesh, const std::vector<ChannelTarget>& targets, std::size_t F,
                double M_bound, const Lemma1Options& opts) {
  const std::size_t n = mesh.nodes();
  const double eps = opts.pair_eps;
  double xmin = mesh.xy[0], xmax = xmin, ymin = mesh.xy[1], ymax = ymin;
  for (std::size_t k = 0; k < n; ++k) {
    xmin = std::min(xmin, mesh.xy[2 * k]);
    xmax = std::max(xmax, mesh.xy[2 * k]);
    ymin = std::min(ymin, mesh.xy[2 * k + 1]);
    ymax = std::max(ymax, mesh.xy[2 * k + 1]);
  }
  const double extent = std::max({xmax - xmin, ymax - ymin, 1e-12});
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);

  CounterRng rng = CounterRng(opts.seed).fork(F);
  Tensor& W1 = ms.lift.W1.value;  // [3, 3F]
  Tensor& b1 = ms.lift.b1.value;
  Tensor& W2 = ms.lift.W2.value;  // [3F, C]
  W1.fill(0.0);
  b1.fill(0.0);
  W2.fill(0.0);
  ms.lift.b2.value.fill(0.0);
  const std::size_t hidden = 3 * F;
  Eigen::MatrixXd Phi(n, F), Psi(n, F);
  for (std::size_t k = 0; k < F; ++k) {
    const double wx = rng.normal() * 4.0 / extent;
    const double wy = rng.normal() * 4.0 / extent;
    const double c = -(wx * cx + wy * cy) + rng.uniform(-2.0, 2.0);
    for (std::size_t u : {k, F + k, 2 * F + k}) {
      W1[0 * hidden + u] = wx;
      W1[1 * hidden + u] = wy;
      b1[u] = c;
    }
    W1[2 * hidden + F + k] = eps;
    W1[2 * hidden + 2 * F + k] = -eps;
    for (std::size_t m = 0; m < n; ++m) {
      const double z = wx * mesh.xy[2 * m] + wy * mesh.xy[2 * m + 1] + c;
      Phi(m, static_cast<Eigen::Index>(k)) = gelu(z);
      Psi(m, static_cast<Eigen::Index>(k)) = 2.0 * eps * gelu_prime(z);
    }
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> phi_cod(Phi), psi_cod(Psi);
  const std::size_t C = ms.config.embed_dim;
  for (const auto& t : targets) {
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(t.values.data(), static_cast<Eigen::Index>(n));
    if (t.times_f) {
      const Eigen::VectorXd g = psi_cod.solve(y);
      for (std::size_t k = 0; k < F; ++k) {
        W2[(F + k) * C + t.channel] = g(static_cast<Eigen::Index>(k));
        W2[(2 * F + k) * C + t.channel] = -g(static_cast<Eigen::Index>(k));
      }
    } else {
      const Eigen::VectorXd g = phi_cod.solve(y);
      for (std::size_t k = 0; k < F; ++k) W2[k * C + t.channel] = g(static_cast<Eigen::Index>(k));
    }
  }

  // Certify over every node and a grid of f values in [-M, M].
  double worst = 0.0;
  const Tensor coords = mesh.coords();
  for (std::size_t g = 0; g < opts.f_grid; ++g) {
    const double fv = opts.f_grid == 1 ? M_bound : -M_bound + 2.0 * M_bound * g / (opts.f_grid - 1);
    Tape tape;
    Var x = tape.constant(coords);
    Var f = tape.constant(Tensor({n, 1}, fv));
    const Tensor h = lift(tape, ms, x, &f).value();
    std::vector<double> expect(n * C, 0.0);
    for (const auto& t : targets) {
      for (std::size_t m = 0; m < n; ++m) expect[m * C + t.channel] = t.values[m] * (t.times_f ? fv : 1.0);
    }
    for (std::size_t k = 0; k < n * C; ++k) worst = std::max(worst, std::abs(h[k] - expect[k]));
  }
  return worst;
}

void set_block(ModelState& ms, const Lemma1Layout& L, double square_eps) {
  const std::size_t C = L.channels;
  CatoBlock& blk = ms.blocks.front();
  for (std::size_t k = 0; k < C; ++k) blk.attn.Wv.value[k * C + k] = 1.0;
  for (std::size_t r = 0; r < L.U.size(); ++r) blk.attn.Wo_row.value[L.U[r] * C + L.M[r]] = 1.0;
  for (std::size_t s = 0; s < L.V.size(); ++s) blk.attn.Wo_col.value[L.V[s] * C + L.N[s]] = 1.0;

  std::vector<std::pair<std::size_t, std::size_t>> products;
  for (std::size_t r = 0; r < L.P.size(); ++r) products.emplace_back(L.P[r], L.M[r]);
  for (std::size_t s = 0; s < L.Q.size(); ++s) products.emplace_back(L.Q[s], L.N[s]);
  products.emplace_back(L.Lambda, L.Z);
  Tensor& W1 = blk.mlp.W1.value;  // [C, 4C]
  Tensor& W2 = blk.mlp.W2.value;  // [4C, C]
  const std::size_t hidden = W1.dim(1);
  if (4 * products.size() > hidden) throw ConfigError("block MLP too narrow for the product units");
  // y^2 ~ (gelu(e y) + gelu(-e y)) / (e^2 sqrt(2/pi)) and p m = ((p + m)^2 - (p - m)^2) / 4.
  const double e = square_eps;
  const double w_out = 1.0 / (4.0 * e * e * std::sqrt(2.0 / std::numbers::pi));
  for (std::size_t k = 0; k < products.size(); ++k) {
    const auto [i, j] = products[k];
    const std::size_t u = 4 * k;
    const double sign_in[4][2] = {{e, e}, {-e, -e}, {e, -e}, {-e, e}};
    const double sign_out[4] = {w_out, w_out, -w_out, -w_out};
    for (std::size_t q = 0; q < 4; ++q) {
      W1[i * hidden + u + q] += sign_in[q][0];
      W1[j * hidden + u + q] += sign_in[q][1];
      W2[(u + q) * C + L.O] = sign_out[q];
    }
  }
  ms.readout.w_u.value[L.O] = 1.0;
}

}  // namespace

std::vector<double> Lemma1Network::operator()(std::span<const double> f) {
  const std::size_t n = mesh.nodes();
  if (f.size() != n) throw ShapeError("field has " + std::to_string(f.size()) + " entries, mesh has " + std::to_string(n));
  Tape tape;
  ForwardOptions opts;
  opts.zeta = &zeta;
  Tensor feats({n, 1}, std::vector<double>(f.begin(), f.end()));
  ForwardOutput out = model_forward(tape, model, mesh.coords(), feats, mesh.grid, opts);
  const auto u = out.u_hat.value().data();
  return {u.begin(), u.end()};
}

Lemma1Network construct_lemma1_network(const AxialOperatorSpec& spec, const Mesh& mesh, const ChartCoords& zeta,
                                       double M_bound, double eps_nn, const Lemma1Options& opts) {
  spec.validate();
  mesh.validate();
  const std::size_t n = mesh.nodes();
  if (zeta.size() != n) throw ShapeError("chart does not match the mesh");
  if (!(M_bound > 0.0) || !(eps_nn > 0.0)) throw ConfigError("M and eps_nn must be positive");
  const Lemma1Layout L = make_layout(spec, opts.head_budget);

  std::vector<ChannelTarget> targets;
  auto coeff = [&](const Poly2& g) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = g(zeta.xi[k], zeta.eta[k]);
    return v;
  };
  for (std::size_t r = 0; r < spec.rank_xi(); ++r) {
    targets.push_back({L.P[r], coeff(spec.a[r]), false});
    targets.push_back({L.U[r], coeff(spec.b[r]), true});
  }
  for (std::size_t s = 0; s < spec.rank_eta(); ++s) {
    targets.push_back({L.Q[s], coeff(spec.c[s]), false});
    targets.push_back({L.V[s], coeff(spec.d[s]), true});
  }
  targets.push_back({L.Lambda, coeff(spec.ell), false});
  targets.push_back({L.Z, std::vector<double>(n, 1.0), true});
  const double tol = eps_nn / (2.0 * std::sqrt(static_cast<double>(n)) * static_cast<double>(targets.size()));

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t F : opts.widths) {
    CatoConfig cfg;
    cfg.layers = 1;
    cfg.embed_dim = L.channels;
    cfg.heads = L.heads;
    cfg.chart_hidden = 2;
    cfg.feature_dim = 1;
    cfg.lift_hidden = 3 * F;
    cfg.core = true;
    Lemma1Network net{ModelState::create(cfg, opts.seed), L, mesh, zeta.as_tensor(), F, 0.0, tol};
    zero_all(net.model);
    net.lift_error = fit_lift(net.model, mesh, targets, F, M_bound, opts);
    best = std::min(best, net.lift_error);
    if (net.lift_error <= tol) {
      set_block(net.model, L, opts.square_eps);
      return net;
    }
  }
  char msg[160];
  std::snprintf(msg, sizeof msg, "channel fit did not reach tolerance %.3g (best %.3g) for spec '%s'", tol, best,
                spec.name.c_str());
  throw FitError(msg);
}

std::vector<std::vector<double>> sample_ball(std::size_t n, double M, std::size_t count, CounterRng& rng) {
  std::vector<std::vector<double>> out;
  out.reserve(count + n);
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<double> f(n);
    for (double& v : f) v = rng.normal();
    const double nrm = norm2(f);
    for (double& v : f) v *= M / nrm;
    out.push_back(std::move(f));
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> f(n, 0.0);
    f[k] = M;
    out.push_back(std::move(f));
  }
  return out;
}

BoundReport check_lemma1(Lemma1Network& net, const AxialOperatorSpec& spec, const ChartCoords& zeta, double M_bound,
                         double eps_nn, CounterRng& rng, std::size_t count) {
  BoundReport rep;
  rep.name = "lemma1:" + spec.name;
  rep.M = M_bound;
  rep.eps_nn = eps_nn;
  rep.c_chart = spec.c_chart();
  rep.bound = eps_nn;
  for (const auto& f : sample_ball(net.mesh.nodes(), M_bound, count, rng)) {
    rep.measured = std::max(rep.measured, diff_norm(net(f), apply_T(spec, zeta, f, net.mesh.grid)));
    ++rep.samples;
  }
  rep.margin = rep.bound - rep.measured;
  rep.pass = rep.measured <= rep.bound;
  return rep;
}

BoundReport measure_chart_stability(const AxialOperatorSpec& spec, const ChartCoords& zeta, GridShape grid,
                                    double delta, std::size_t trials, CounterRng& rng) {
  if (delta < 0.0) throw ConfigError("delta must be non-negative");
  BoundReport rep;
  rep.name = "lemma2:" + spec.name;
  rep.delta = delta;
  rep.c_chart = spec.c_chart();
  rep.bound = delta == 0.0 ? 0.0 : rep.c_chart;
  const std::size_t n = grid.nodes();
  for (std::size_t t = 0; t < trials; ++t) {
    const ChartCoords zh = chart_perturb(zeta, delta, rng);
    std::vector<double> f(n);
    for (double& v : f) v = rng.normal();
    const double d = diff_norm(apply_T(spec, zh, f, grid), apply_T(spec, zeta, f, grid));
    // With delta = 0 the raw difference is reported and must vanish.
    rep.measured = std::max(rep.measured, delta == 0.0 ? d : d / (delta * norm2(f)));
    ++rep.samples;
  }
  rep.margin = rep.bound - rep.measured;
  rep.pass = rep.measured <= rep.bound;
  return rep;
}

double chart_drift(const AxialOperatorSpec& spec, const ChartCoords& zeta, GridShape grid, std::span<const double> f,
                   std::span<const double> direction, double delta) {
  if (direction.size() != 2 * zeta.size()) throw ShapeError("direction must hold two entries per node");
  ChartCoords zh = zeta;
  for (std::size_t k = 0; k < zeta.size(); ++k) {
    zh.xi[k] = std::clamp(zeta.xi[k] + delta * direction[2 * k], -1.0, 1.0);
    zh.eta[k] = std::clamp(zeta.eta[k] + delta * direction[2 * k + 1], -1.0, 1.0);
  }
  return diff_norm(apply_T(spec, zh, f, grid), apply_T(spec, zeta, f, grid));
}

std::vector<double> random_residual(std::size_t n, double eps_rk, CounterRng& rng) {
  Eigen::MatrixXd R(n, n);
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    for (Eigen::Index j = 0; j < R.cols(); ++j) R(i, j) = rng.normal();
  }
  const double smax = Eigen::JacobiSVD<Eigen::MatrixXd>(R).singularValues()(0);
  R *= eps_rk / smax;
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return out;
}

BoundReport verify_theorem1(const AxialOperatorSpec& spec, const Mesh& mesh, const ChartCoords& zeta,
                            const ChartCoords& zeta_hat, double M_bound, double eps_rk, double eps_nn,
                            CounterRng& rng, const Lemma1Options& opts) {
  const std::size_t n = mesh.nodes();
  if (zeta_hat.size() != n || zeta.size() != n) throw ShapeError("charts do not match the mesh");
  double delta = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    delta = std::max(delta, std::hypot(zeta_hat.xi[k] - zeta.xi[k], zeta_hat.eta[k] - zeta.eta[k]));
  }
  Lemma1Network net = construct_lemma1_network(spec, mesh, zeta_hat, M_bound, eps_nn, opts);
  const std::vector<double> R = random_residual(n, eps_rk, rng);

  BoundReport rep;
  rep.name = "theorem1:" + spec.name;
  rep.M = M_bound;
  rep.delta = delta;
  rep.eps_rk = eps_rk;
  rep.eps_nn = eps_nn;
  rep.c_chart = spec.c_chart();
  rep.bound = eps_rk * M_bound + rep.c_chart * M_bound * delta + eps_nn;
  for (const auto& f : sample_ball(n, M_bound, 256, rng)) {
    std::vector<double> target = apply_T(spec, zeta, f, mesh.grid);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) target[i] += R[i * n + j] * f[j];
    }
    rep.measured = std::max(rep.measured, diff_norm(net(f), target));
    ++rep.samples;
  }
  rep.margin = rep.bound - rep.measured;
  rep.pass = rep.measured <= rep.bound;
  return rep;
}

}  // namespace cato
