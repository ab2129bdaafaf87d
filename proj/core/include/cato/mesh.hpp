#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cato/autodiff.hpp"

namespace cato {

/// Structured H x W node layout; node (i, j) has flat index i * cols + j.
struct GridShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t nodes() const { return rows * cols; }
  bool operator==(const GridShape&) const = default;
};

/// Physical coordinates of a structured mesh, (x, y) interleaved per node.
struct Mesh {
  GridShape grid;
  std::vector<double> xy;

  /// Uniform grid on [x0,x1] x [y0,y1] with x along columns and y along rows.
  static Mesh regular(std::size_t rows, std::size_t cols, double x0 = 0.0, double x1 = 1.0, double y0 = 0.0,
                      double y1 = 1.0);

  double x(std::size_t i, std::size_t j) const { return xy[2 * (i * grid.cols + j)]; }
  double y(std::size_t i, std::size_t j) const { return xy[2 * (i * grid.cols + j) + 1]; }
  std::size_t nodes() const { return grid.nodes(); }

  /// Coordinates as an [N, 2] tensor.
  Tensor coords() const;
  /// Throws unless the mesh is consistent and finite.
  void validate() const;
};

/// Interior centered differences; boundary entries are zero and marked invalid.
struct CenteredDiffs {
  GridShape grid;
  std::vector<double> di;
  std::vector<double> dj;
  std::vector<std::uint8_t> valid;
};

CenteredDiffs centered_diffs(std::span<const double> field, GridShape grid);

/// Physical gradient per node with a validity mask.
struct GradField {
  GridShape grid;
  std::vector<double> ux;
  std::vector<double> uy;
  std::vector<std::uint8_t> valid;

  std::size_t valid_count() const;
};

/// Per-node 2x2 inverse coefficients of a mesh, reused across fields.
///
/// With (a, b) = Delta_i x and (c, d) = Delta_j x at node (i, j):
///   u_x = (Delta_i u * d - Delta_j u * b) / (ad - bc)
///   u_y = (-Delta_i u * c + Delta_j u * a) / (ad - bc)
/// Boundary nodes and nodes with |ad - bc| <= det_rel_tol * scale^2 are masked.
class MeshGradientOperator {
 public:
  explicit MeshGradientOperator(const Mesh& mesh, double det_rel_tol = 1e-12);

  GradField apply(std::span<const double> u) const;
  /// Differentiable gradient of u ([N] or [N,1]) as [N, 2]; masked rows are zero.
  Var apply(const Var& u) const;

  const GridShape& grid() const { return grid_; }
  std::size_t valid_count() const { return valid_count_; }
  std::size_t degenerate_count() const { return degenerate_count_; }
  const std::vector<std::uint8_t>& valid() const { return valid_; }
  /// [N, 2] tensor with 1 on valid rows, 0 elsewhere.
  const Tensor& mask2() const { return mask2_; }

 private:
  GridShape grid_;
  std::vector<std::uint8_t> valid_;
  // u_x = ci_x * Delta_i u + cj_x * Delta_j u, likewise for u_y; zero on masked nodes.
  Tensor ci_x_, cj_x_, ci_y_, cj_y_;
  Tensor mask2_;
  std::vector<long> up_, down_, left_, right_;
  std::size_t valid_count_ = 0;
  std::size_t degenerate_count_ = 0;
};

/// Convenience wrapper: builds the operator and applies it once.
GradField mesh_gradient(std::span<const double> u, const Mesh& mesh);

}  // namespace cato
