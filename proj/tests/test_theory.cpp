#include <doctest.h>

#include <cmath>
#include <vector>

#include "cato/chart.hpp"
#include "cato/error.hpp"
#include "cato/theory.hpp"
#include "support/oracles.hpp"

using namespace cato;

namespace {

ChartCoords random_chart(std::size_t n, CounterRng& rng, double range = 0.9) {
  ChartCoords z;
  for (std::size_t i = 0; i < n; ++i) {
    z.xi.push_back(rng.uniform(-range, range));
    z.eta.push_back(rng.uniform(-range, range));
  }
  return z;
}

std::vector<double> random_field(std::size_t n, CounterRng& rng) {
  std::vector<double> f(n);
  for (double& v : f) v = rng.normal();
  return f;
}

}  // namespace

TEST_CASE("polynomial bounds") {
  CounterRng rng(1);
  for (int t = 0; t < 20; ++t) {
    Poly2 p = Poly2::random(rng, 1.5);
    double l1 = 0.0;
    for (double c : p.c) l1 += std::abs(c);
    CHECK(l1 == doctest::Approx(1.5));
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (a + b > 3) CHECK(p.c[a * 4 + b] == 0.0);
    for (int s = 0; s < 200; ++s) {
      const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
      CHECK(std::abs(p(x, y)) <= p.sup_bound() + 1e-15);
      const double x2 = rng.uniform(-1, 1), y2 = rng.uniform(-1, 1);
      CHECK(std::abs(p(x, y) - p(x2, y2)) <= p.lipschitz() * std::hypot(x - x2, y - y2) + 1e-14);
    }
  }
  CHECK(Poly2::xi()(0.3, -0.5) == 0.3);
  CHECK(Poly2::eta()(0.3, -0.5) == -0.5);
  CHECK(Poly2::constant(2.0).lipschitz() == 0.0);
}

TEST_CASE("apply_T examples") {
  CounterRng rng(2);
  const GridShape grid{4, 5};
  auto z = random_chart(20, rng);
  auto f = random_field(20, rng);
  auto id = apply_T(AxialOperatorSpec::identity(), z, f, grid);
  for (std::size_t k = 0; k < 20; ++k) CHECK(id[k] == f[k]);
  auto rm = apply_T(AxialOperatorSpec::row_mean(), z, f, grid);
  for (std::size_t i = 0; i < 4; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < 5; ++j) m += f[i * 5 + j];
    for (std::size_t j = 0; j < 5; ++j) CHECK(rm[i * 5 + j] == doctest::Approx(m / 5.0).epsilon(1e-14));
  }
  for (std::uint64_t seed : {1, 2, 3}) {
    auto spec = AxialOperatorSpec::polynomial(seed);
    CHECK(spec.rank_xi() == 2);
    CHECK(spec.rank_eta() == 2);
    auto got = apply_T(spec, z, f, grid);
    auto ref = oracle::naive_apply_T(spec, z, f, grid);
    for (std::size_t k = 0; k < 20; ++k) CHECK(std::abs(got[k] - ref[k]) < 1e-13);
  }
}

TEST_CASE("chart constants") {
  CHECK(AxialOperatorSpec::identity().c_chart() == 0.0);
  CHECK(AxialOperatorSpec::row_mean().c_chart() == 0.0);
  CHECK(AxialOperatorSpec::linear_chart().c_chart() == 1.0);
  // independent recomputation of sum(L_a B + A L_b) + sum(L_c D + C L_d) + L_ell
  auto spec = AxialOperatorSpec::polynomial(5);
  auto lip = [](const Poly2& p) {
    double lx = 0.0, ly = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        lx += a * std::abs(p.c[a * 4 + b]);
        ly += b * std::abs(p.c[a * 4 + b]);
      }
    return std::sqrt(lx * lx + ly * ly);
  };
  auto sup = [](const Poly2& p) {
    double s = 0.0;
    for (double c : p.c) s += std::abs(c);
    return s;
  };
  double c = lip(spec.ell);
  for (std::size_t r = 0; r < 2; ++r) {
    c += lip(spec.a[r]) * sup(spec.b[r]) + sup(spec.a[r]) * lip(spec.b[r]);
    c += lip(spec.c[r]) * sup(spec.d[r]) + sup(spec.c[r]) * lip(spec.d[r]);
  }
  CHECK(spec.c_chart() == doctest::Approx(c).epsilon(1e-14));
}

TEST_CASE("chart stability") {
  CounterRng rng(3);
  const GridShape grid{8, 8};
  auto z = random_chart(64, rng);
  auto zero = measure_chart_stability(AxialOperatorSpec::linear_chart(), z, grid, 0.0, 20, rng);
  CHECK(zero.measured == 0.0);
  CHECK(zero.pass);
  auto constant = measure_chart_stability(AxialOperatorSpec::row_mean(), z, grid, 0.1, 20, rng);
  CHECK(constant.measured == 0.0);
  for (double d : {0.01, 0.05, 0.1}) {
    auto r = measure_chart_stability(AxialOperatorSpec::linear_chart(), z, grid, d, 100, rng);
    CHECK(r.pass);
    CHECK(r.measured <= 1.0);
    CHECK(r.c_chart == 1.0);
    CHECK(r.samples == 100);
  }
  auto f = random_field(64, rng), dir = random_field(128, rng);
  CHECK(chart_drift(AxialOperatorSpec::linear_chart(), z, grid, f, dir, 0.0) == 0.0);
}

TEST_CASE("ball samples") {
  CounterRng rng(4);
  auto s = sample_ball(16, 2.0, 30, rng);
  CHECK(s.size() == 30 + 16);
  for (const auto& f : s) CHECK(l2_norm(f) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("random residual has the requested spectral norm") {
  CounterRng rng(5);
  auto r = random_residual(10, 0.05, rng);
  CHECK(r.size() == 100);
  // power iteration on R^T R
  std::vector<double> v(10, 1.0);
  double sigma = 0.0;
  for (int it = 0; it < 500; ++it) {
    std::vector<double> w(10, 0.0), u(10, 0.0);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) w[i] += r[i * 10 + j] * v[j];
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) u[j] += r[i * 10 + j] * w[i];
    const double n = l2_norm(u);
    sigma = std::sqrt(n / l2_norm(v));
    for (int j = 0; j < 10; ++j) v[j] = u[j] / n;
  }
  CHECK(sigma == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("lemma 1 construction on a small grid") {
  CounterRng rng(6);
  Mesh mesh = Mesh::regular(4, 4);
  auto z = random_chart(16, rng);
  for (auto spec : {AxialOperatorSpec::identity(), AxialOperatorSpec::row_mean()}) {
    auto net = construct_lemma1_network(spec, mesh, z, 1.0, 1e-2);
    CHECK(net.model.config.core);
    CHECK(net.model.config.layers == 1);
    CHECK(net.lift_error <= net.tolerance);
    auto r = check_lemma1(net, spec, z, 1.0, 1e-2, rng, 32);
    CHECK(r.pass);
    CHECK(r.measured <= 1e-2);
    // explicit comparison against apply_T
    auto f = random_field(16, rng);
    const double scale = 1.0 / l2_norm(f);
    for (double& v : f) v *= scale;
    auto got = net(f);
    auto ref = apply_T(spec, z, f, mesh.grid);
    double err = 0.0;
    for (std::size_t k = 0; k < 16; ++k) err += (got[k] - ref[k]) * (got[k] - ref[k]);
    CHECK(std::sqrt(err) <= 1e-2);
  }
}

TEST_CASE("lemma 1 layout respects the head budget") {
  CounterRng rng(7);
  Mesh mesh = Mesh::regular(4, 4);
  auto z = random_chart(16, rng);
  Lemma1Options opts;
  opts.head_budget = 2;
  CHECK_THROWS_AS(construct_lemma1_network(AxialOperatorSpec::polynomial(1), mesh, z, 1.0, 1e-2, opts), ConfigError);
}

TEST_CASE("under-budgeted fits are reported, not passed") {
  CounterRng rng(8);
  Mesh mesh = Mesh::regular(4, 4);
  auto z = random_chart(16, rng);
  Lemma1Options opts;
  opts.widths = {2};
  CHECK_THROWS_AS(construct_lemma1_network(AxialOperatorSpec::polynomial(1), mesh, z, 1.0, 1e-12, opts), FitError);
}

TEST_CASE("theorem 1 degenerate cases") {
  CounterRng rng(9);
  Mesh mesh = Mesh::regular(4, 4);
  auto z = random_chart(16, rng);
  auto spec = AxialOperatorSpec::row_mean();
  auto lemma = verify_theorem1(spec, mesh, z, z, 1.0, 0.0, 1e-2, rng);
  CHECK(lemma.pass);
  CHECK(lemma.bound == doctest::Approx(1e-2));
  auto rk = verify_theorem1(spec, mesh, z, z, 1.0, 0.05, 1e-2, rng);
  CHECK(rk.pass);
  CHECK(rk.bound == doctest::Approx(0.06));
  CHECK(rk.to_json().find("\"pass\":true") != std::string::npos);
}
