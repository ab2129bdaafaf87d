#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cato/chart.hpp"
#include "cato/mesh.hpp"
#include "cato/model.hpp"
#include "cato/rng.hpp"

namespace cato {

/// Bivariate polynomial sum_{p,q<=3} c[p][q] xi^p eta^q on [-1, 1]^2.
struct Poly2 {
  std::array<double, 16> c{};  // index p * 4 + q

  double operator()(double xi, double eta) const;
  /// sum |c|, a bound on sup |g| over [-1, 1]^2.
  double sup_bound() const;
  /// sqrt((sum p|c|)^2 + (sum q|c|)^2), a Lipschitz bound on [-1, 1]^2.
  double lipschitz() const;

  static Poly2 constant(double v);
  static Poly2 xi();
  static Poly2 eta();
  /// Random coefficients of total degree <= 3 rescaled so that sum |c| = l1.
  static Poly2 random(CounterRng& rng, double l1);
};

/// T f = sum_r a_r (row mean of b_r f) + sum_s c_s (column mean of d_s f) + ell f.
struct AxialOperatorSpec {
  std::string name;
  std::vector<Poly2> a, b;  // R_xi each
  std::vector<Poly2> c, d;  // R_eta each
  Poly2 ell;

  std::size_t rank_xi() const { return a.size(); }
  std::size_t rank_eta() const { return c.size(); }
  void validate() const;
  /// sum (L_a B + A L_b) + sum (L_c D + C L_d) + L_ell.
  double c_chart() const;

  static AxialOperatorSpec identity();
  static AxialOperatorSpec row_mean();
  /// a_1 = xi, b_1 = 1; C_chart = 1.
  static AxialOperatorSpec linear_chart();
  /// Degree-3 coefficients with R_xi = R_eta = 2.
  static AxialOperatorSpec polynomial(std::uint64_t seed);
};

std::vector<double> apply_T(const AxialOperatorSpec& spec, const ChartCoords& zeta, std::span<const double> f,
                            GridShape grid);

struct BoundReport {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound - measured
  std::size_t samples = 0;
  double M = 0.0;
  double delta = 0.0;
  double eps_rk = 0.0;
  double eps_nn = 0.0;
  double c_chart = 0.0;
  bool pass = false;

  std::string to_json() const;
};

/// Reserved channels of the constructed network.
struct Lemma1Layout {
  std::vector<std::size_t> P, U, M;  // R_xi each
  std::vector<std::size_t> Q, V, N;  // R_eta each
  std::size_t Lambda = 0, Z = 0, O = 0;
  std::size_t channels = 0;
  std::size_t heads = 0;
};

struct Lemma1Options {
  std::vector<std::size_t> widths{32, 64, 128};
  std::size_t head_budget = 8;
  double pair_eps = 1e-4;    // lift units gelu(z + eps f) - gelu(z - eps f)
  double square_eps = 1e-3;  // block MLP units gelu(eps y) + gelu(-eps y)
  std::size_t f_grid = 9;    // f values per node used to certify the lift fit
  std::uint64_t seed = 7;
};

struct Lemma1Network {
  ModelState model;
  Lemma1Layout layout;
  Mesh mesh;
  Tensor zeta;  // [N, 2]
  std::size_t width = 0;  // random features F; lift hidden = 3F
  double lift_error = 0.0;
  double tolerance = 0.0;

  /// N_Theta(f) for f on the mesh nodes.
  std::vector<double> operator()(std::span<const double> f);
};

/// One-block core network following the Lemma 1 construction. Throws
/// ConfigError when the head budget is exceeded and FitError when no width
/// reaches the channel tolerance eps_nn / (2 sqrt(N) channels).
Lemma1Network construct_lemma1_network(const AxialOperatorSpec& spec, const Mesh& mesh, const ChartCoords& zeta,
                                       double M_bound, double eps_nn, const Lemma1Options& opts = {});

/// 256 random fields on the sphere of radius M followed by the N scaled axis indicators.
std::vector<std::vector<double>> sample_ball(std::size_t n, double M, std::size_t count, CounterRng& rng);

BoundReport check_lemma1(Lemma1Network& net, const AxialOperatorSpec& spec, const ChartCoords& zeta, double M_bound,
                         double eps_nn, CounterRng& rng, std::size_t count = 256);

BoundReport measure_chart_stability(const AxialOperatorSpec& spec, const ChartCoords& zeta, GridShape grid,
                                    double delta, std::size_t trials, CounterRng& rng);

/// ||T_{zeta + delta dir} f - T_zeta f||_2 with clamping to [-1, 1]^2.
double chart_drift(const AxialOperatorSpec& spec, const ChartCoords& zeta, GridShape grid, std::span<const double> f,
                   std::span<const double> direction, double delta);

/// Random N x N map rescaled to spectral norm eps_rk.
std::vector<double> random_residual(std::size_t n, double eps_rk, CounterRng& rng);

BoundReport verify_theorem1(const AxialOperatorSpec& spec, const Mesh& mesh, const ChartCoords& zeta,
                            const ChartCoords& zeta_hat, double M_bound, double eps_rk, double eps_nn,
                            CounterRng& rng, const Lemma1Options& opts = {});

}  // namespace cato
