#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "cato/autodiff.hpp"
#include "cato/mesh.hpp"

namespace cato {

struct LossWeights {
  double lambda_g = 0.0;
  double lambda_f = 0.0;
  double lambda_c = 0.0;
  double eps = 1e-8;

  void validate() const;
  /// Darcy preset (0.2, 0.2, 0.05).
  static LossWeights darcy();
  static LossWeights value_only() { return {}; }
};

struct LossReport {
  double total = 0.0;
  double val = 0.0;
  double grad = 0.0;
  double flux = 0.0;
  double cons = 0.0;
  std::size_t valid_nodes = 0;

  /// One JSON object on a single line, without a trailing newline.
  std::string to_json_line() const;
};

/// One sample's predictions and target. `op` carries the mesh geometry.
struct LossSample {
  Var u_hat;  // [N, 1] or [N]
  Var q_hat;  // [N, 2]
  const Tensor* u = nullptr;
  const MeshGradientOperator* op = nullptr;
};

struct LossTerms {
  Var total;
  Var val;
  Var grad;
  Var flux;
  Var cons;
  std::size_t valid_nodes = 0;

  LossReport report() const;
};

// Batch terms. Squared-error terms sum over valid nodes of every sample and
// divide by the batch-wide valid count.
Var loss_val(Tape& tape, std::span<const LossSample> batch, double eps);
Var loss_grad(Tape& tape, std::span<const LossSample> batch);
Var loss_flux(Tape& tape, std::span<const LossSample> batch);
Var loss_cons(Tape& tape, std::span<const LossSample> batch);
LossTerms total_loss(Tape& tape, std::span<const LossSample> batch, const LossWeights& w);

// Single-sample conveniences on plain tensors.
double loss_val(const Tensor& u_hat, const Tensor& u, double eps = 1e-8);
double loss_grad(const Tensor& u_hat, const Tensor& u, const Mesh& mesh);
double loss_flux(const Tensor& q_hat, const Tensor& u, const Mesh& mesh);
double loss_cons(const Tensor& q_hat, const Tensor& u_hat, const Mesh& mesh);
LossReport total_loss(const Tensor& u_hat, const Tensor& q_hat, const Tensor& u, const Mesh& mesh,
                      const LossWeights& w);

/// Evaluation metric ||u_hat - u|| / ||u||.
double relative_l2(std::span<const double> u_hat, std::span<const double> u);

}  // namespace cato
