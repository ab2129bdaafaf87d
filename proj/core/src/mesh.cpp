#include "cato/mesh.hpp"

#include <algorithm>
#include <cmath>

#include "cato/error.hpp"
#include "cato/ops.hpp"

namespace cato {

Mesh Mesh::regular(std::size_t rows, std::size_t cols, double x0, double x1, double y0, double y1) {
  if (rows < 1 || cols < 1) throw ShapeError("mesh needs at least one node per axis");
  Mesh m;
  m.grid = {rows, cols};
  m.xy.resize(2 * rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double tx = cols > 1 ? static_cast<double>(j) / static_cast<double>(cols - 1) : 0.0;
      const double ty = rows > 1 ? static_cast<double>(i) / static_cast<double>(rows - 1) : 0.0;
      m.xy[2 * (i * cols + j)] = x0 + (x1 - x0) * tx;
      m.xy[2 * (i * cols + j) + 1] = y0 + (y1 - y0) * ty;
    }
  return m;
}

Tensor Mesh::coords() const { return Tensor({nodes(), 2}, xy); }

void Mesh::validate() const {
  if (grid.rows == 0 || grid.cols == 0) throw ShapeError("mesh is empty");
  if (xy.size() != 2 * grid.nodes()) {
    throw ShapeError("mesh coordinate count " + std::to_string(xy.size()) + " != 2 x " +
                     std::to_string(grid.nodes()));
  }
  if (!std::all_of(xy.begin(), xy.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericError("mesh has non-finite coordinates");
  }
}

CenteredDiffs centered_diffs(std::span<const double> field, GridShape grid) {
  if (grid.rows < 3 || grid.cols < 3) {
    throw ShapeError("centered differences need a grid of at least 3x3, got " + std::to_string(grid.rows) + "x" +
                     std::to_string(grid.cols));
  }
  if (field.size() != grid.nodes()) throw ShapeError("field size does not match grid");
  CenteredDiffs d{grid, std::vector<double>(grid.nodes(), 0.0), std::vector<double>(grid.nodes(), 0.0),
                  std::vector<std::uint8_t>(grid.nodes(), 0)};
  const std::size_t w = grid.cols;
  for (std::size_t i = 1; i + 1 < grid.rows; ++i)
    for (std::size_t j = 1; j + 1 < w; ++j) {
      const std::size_t n = i * w + j;
      d.di[n] = field[n + w] - field[n - w];
      d.dj[n] = field[n + 1] - field[n - 1];
      d.valid[n] = 1;
    }
  return d;
}

std::size_t GradField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

MeshGradientOperator::MeshGradientOperator(const Mesh& mesh, double det_rel_tol) : grid_(mesh.grid) {
  mesh.validate();
  const std::size_t n_nodes = grid_.nodes();
  const std::size_t w = grid_.cols;
  if (grid_.rows < 3 || grid_.cols < 3) {
    throw ShapeError("mesh gradient needs at least 3x3 nodes");
  }
  valid_.assign(n_nodes, 0);
  ci_x_ = Tensor({n_nodes}, 0.0);
  cj_x_ = Tensor({n_nodes}, 0.0);
  ci_y_ = Tensor({n_nodes}, 0.0);
  cj_y_ = Tensor({n_nodes}, 0.0);
  mask2_ = Tensor({n_nodes, 2}, 0.0);
  up_.assign(n_nodes, -1);
  down_.assign(n_nodes, -1);
  left_.assign(n_nodes, -1);
  right_.assign(n_nodes, -1);
  for (std::size_t i = 1; i + 1 < grid_.rows; ++i)
    for (std::size_t j = 1; j + 1 < w; ++j) {
      const std::size_t n = i * w + j;
      const double a = mesh.x(i + 1, j) - mesh.x(i - 1, j);
      const double b = mesh.y(i + 1, j) - mesh.y(i - 1, j);
      const double c = mesh.x(i, j + 1) - mesh.x(i, j - 1);
      const double d = mesh.y(i, j + 1) - mesh.y(i, j - 1);
      const double det = a * d - b * c;
      const double scale2 = std::max(a * a + b * b, c * c + d * d);
      if (!(std::abs(det) > det_rel_tol * scale2)) {
        ++degenerate_count_;
        continue;
      }
      valid_[n] = 1;
      ci_x_[n] = d / det;
      cj_x_[n] = -b / det;
      ci_y_[n] = -c / det;
      cj_y_[n] = a / det;
      mask2_[2 * n] = mask2_[2 * n + 1] = 1.0;
      up_[n] = static_cast<long>(n + w);
      down_[n] = static_cast<long>(n - w);
      right_[n] = static_cast<long>(n + 1);
      left_[n] = static_cast<long>(n - 1);
      ++valid_count_;
    }
}

GradField MeshGradientOperator::apply(std::span<const double> u) const {
  if (u.size() != grid_.nodes()) throw ShapeError("field size does not match mesh");
  GradField g{grid_, std::vector<double>(grid_.nodes(), 0.0), std::vector<double>(grid_.nodes(), 0.0), valid_};
  for (std::size_t n = 0; n < grid_.nodes(); ++n) {
    if (!valid_[n]) continue;
    const double di = u[static_cast<std::size_t>(up_[n])] - u[static_cast<std::size_t>(down_[n])];
    const double dj = u[static_cast<std::size_t>(right_[n])] - u[static_cast<std::size_t>(left_[n])];
    g.ux[n] = ci_x_[n] * di + cj_x_[n] * dj;
    g.uy[n] = ci_y_[n] * di + cj_y_[n] * dj;
  }
  return g;
}

Var MeshGradientOperator::apply(const Var& u) const {
  const std::size_t n_nodes = grid_.nodes();
  if (u.numel() != n_nodes) throw ShapeError("field size does not match mesh");
  Tape& tape = *u.tape();
  Var flat = ops::reshape(u, {n_nodes, 1});
  Var di = ops::sub(ops::index_select(flat, 0, up_), ops::index_select(flat, 0, down_));
  Var dj = ops::sub(ops::index_select(flat, 0, right_), ops::index_select(flat, 0, left_));
  auto col = [&](const Tensor& t) { return tape.constant(t.reshaped({n_nodes, 1})); };
  Var ux = ops::add(ops::mul(di, col(ci_x_)), ops::mul(dj, col(cj_x_)));
  Var uy = ops::add(ops::mul(di, col(ci_y_)), ops::mul(dj, col(cj_y_)));
  return ops::concat({ux, uy});
}

GradField mesh_gradient(std::span<const double> u, const Mesh& mesh) { return MeshGradientOperator(mesh).apply(u); }

}  // namespace cato
