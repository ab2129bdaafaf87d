#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cato/mesh.hpp"
#include "cato/point_cloud.hpp"
#include "cato/tensor.hpp"

namespace cato {

/// Smooth random field 1 + (contrast - 1) * sigmoid(s(x, y)), where s is a
/// truncated Fourier sum with decaying amplitudes. Values lie in [1, contrast].
class CoefficientField {
 public:
  CoefficientField(std::uint64_t seed, double contrast, std::size_t modes = 4);
  double operator()(double x, double y) const;
  double contrast() const { return contrast_; }

 private:
  double contrast_;
  std::size_t modes_;
  std::vector<double> amp_, phase_x_, phase_y_;
};

/// Coefficient on the regular H x W grid of the unit square, row-major.
std::vector<double> gen_coefficient(std::uint64_t seed, std::size_t rows, std::size_t cols, double contrast);

enum class SourceMode { Manufactured, Random };
std::string to_string(SourceMode m);
SourceMode source_mode_from_string(const std::string& s);

/// 2 pi^2 sin(pi x) sin(pi y), the source whose solution for a = 1 is sin(pi x) sin(pi y).
double manufactured_source(double x, double y);

struct SolveStats {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

/// Solves -div(a grad u) = f with u = 0 on the boundary using the 5-point
/// stencil (face coefficients are arithmetic means) and conjugate gradients.
/// The mesh must be an axis-aligned regular grid.
std::vector<double> solve_darcy(std::span<const double> a, const Mesh& mesh, std::span<const double> f,
                                double tol = 1e-10, SolveStats* stats = nullptr, std::size_t max_iter = 0);

/// Regular unit-square grid moved by x += A sin(pi X) sin(2 pi Y), y += A sin(2 pi X) sin(pi Y).
/// Throws ConfigError when any cell folds over.
Mesh distort_mesh(std::size_t rows, std::size_t cols, double amplitude);

/// Smallest signed cell area (per unit reference cell) over all quads of the mesh.
double min_cell_jacobian(const Mesh& mesh);

/// Bilinear interpolation of a regular unit-square grid field at (x, y).
double bilinear(std::span<const double> field, GridShape grid, double x, double y);

struct DatasetConfig {
  std::size_t rows = 32;
  std::size_t cols = 32;
  std::size_t n_train = 512;
  std::size_t n_test = 64;
  double contrast = 10.0;
  std::size_t modes = 4;
  SourceMode source = SourceMode::Manufactured;
  double distortion = 0.0;
  std::size_t cloud_points = 0;  // > 0 also writes point-cloud samples
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t feature_dim() const { return source == SourceMode::Random ? 2 : 1; }
};

struct Sample {
  std::uint64_t seed = 0;
  Mesh mesh;
  Tensor feats;  // [N, d_f]: coefficient, then source in random mode
  Tensor u;      // [N]
  std::optional<PointCloud> cloud;
  Tensor cloud_u;  // [P]
};

/// Deterministic sample from (config, sample seed).
Sample make_sample(const DatasetConfig& cfg, std::uint64_t sample_seed);

struct Dataset {
  DatasetConfig config;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Writes one CATO1 file per field per sample, then manifest.json (via rename).
/// Returns the manifest path.
std::filesystem::path write_dataset(const DatasetConfig& cfg, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace cato
