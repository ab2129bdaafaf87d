#pragma once

// Reference implementations used only by the tests. Everything here is written
// with plain loops over std::vector and shares no code path with the library.

#include <cstddef>
#include <functional>
#include <vector>

#include "cato/autodiff.hpp"
#include "cato/mesh.hpp"
#include "cato/model.hpp"
#include "cato/point_cloud.hpp"
#include "cato/rng.hpp"
#include "cato/theory.hpp"

namespace oracle {

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
  std::size_t rows = 0, cols = 0;
  Vec v;
  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

Mat from_tensor(const cato::Tensor& t);  // rank 1 becomes [1, n]
Mat matmul(const Mat& a, const Mat& b);
Mat add_row(const Mat& a, const Mat& bias);  // bias [1, cols] or [cols]
Mat add(const Mat& a, const Mat& b);
double gelu(double x);
double silu(double x);
Mat apply(const Mat& a, double (*f)(double));
Mat layer_norm(const Mat& x, const Mat& gamma, const Mat& beta, double eps);
Vec softmax(const Vec& x);

// Central finite differences against reverse mode. Returns the worst relative
// error ||g_ad - g_fd||_inf / max(||g_ad||_inf, ||g_fd||_inf, 1e-8) over params.
double fd_check(const std::vector<cato::Parameter*>& params, const std::function<cato::Var(cato::Tape&)>& loss,
                double h = 1e-5);

// Per-sequence attention along rows (axis 0) or columns (axis 1) of a grid.
// Positions are already scaled. Returns [N, C] before the output projection.
Mat naive_axial_mix(const Mat& h, const Mat& Wq, const Mat& Wk, const Mat& Wv, const Vec& pos, cato::GridShape grid,
                    std::size_t heads, double theta, int axis);

// Depthwise convolution with zero padding; kernel [C][k][k].
Mat naive_depthwise(const Mat& h, const cato::Tensor& kernel, const cato::Tensor& bias, cato::GridShape grid);

struct ModelOut {
  Mat u_hat;  // [N, 1]
  Mat q_hat;  // [N, 2]
  Mat zeta;   // [N, 2]
};
ModelOut straight_line_model(const cato::ModelState& ms, const cato::Tensor& coords, const cato::Tensor& feats,
                             cato::GridShape grid);

Vec naive_apply_T(const cato::AxialOperatorSpec& spec, const cato::ChartCoords& z, const Vec& f, cato::GridShape grid);

// neighbours[i] sorted by (distance, index), self excluded.
std::vector<std::vector<long>> brute_knn(const cato::Tensor& coords, std::size_t k);

Mat naive_pc_local(cato::PcLocal& local, const Mat& h, const Mat& coords, const Mat& zeta, std::size_t k);
ModelOut naive_pc_model(cato::PcModelState& ms, const cato::PointCloud& pc);

// Random tensor with entries uniform in [lo, hi).
cato::Tensor random_tensor(cato::Shape shape, cato::CounterRng& rng, double lo = -1.0, double hi = 1.0);

}  // namespace oracle
