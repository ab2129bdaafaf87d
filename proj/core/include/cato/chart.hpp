#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cato/autodiff.hpp"
#include "cato/mesh.hpp"
#include "cato/rng.hpp"

namespace cato {

/// Learned chart: zeta = tanh(SiLU(x V1 + c1) V2 + c2), mapping R^2 into [-1, 1]^2.
struct ChartNet {
  Parameter V1;  // [2, hidden]
  Parameter c1;  // [hidden]
  Parameter V2;  // [hidden, 2]
  Parameter c2;  // [2]

  static ChartNet create(std::size_t hidden, CounterRng& rng, const std::string& prefix = "chart");
  std::size_t hidden() const { return c1.value.numel(); }
  void collect(std::vector<Parameter*>& out);
};

/// Per-node chart coordinates (xi for rows, eta for columns).
struct ChartCoords {
  std::vector<double> xi;
  std::vector<double> eta;

  std::size_t size() const { return xi.size(); }
  /// Interleaved [N, 2] tensor.
  Tensor as_tensor() const;
  static ChartCoords from_tensor(const Tensor& zeta);
};

/// Differentiable chart evaluation on [N, 2] coordinates; returns [N, 2].
Var chart_forward(Tape& tape, ChartNet& net, const Var& coords);
ChartCoords chart_forward(ChartNet& net, const Mesh& mesh);
ChartCoords chart_forward(ChartNet& net, const Tensor& coords);

/// Moves every node by a random direction of length delta, then clamps to [-1, 1]^2.
ChartCoords chart_perturb(const ChartCoords& z, double delta, CounterRng& rng);

/// Diagnostic dump with header "x,y,xi,eta", one line per node.
void write_chart_csv(const std::filesystem::path& path, const Mesh& mesh, const ChartCoords& z);

}  // namespace cato
