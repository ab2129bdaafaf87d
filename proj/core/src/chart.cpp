#include "cato/chart.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "cato/error.hpp"
#include "cato/init.hpp"
#include "cato/ops.hpp"

namespace cato {

ChartNet ChartNet::create(std::size_t hidden, CounterRng& rng, const std::string& prefix) {
  if (hidden == 0) throw ConfigError("chart hidden width must be positive");
  ChartNet net;
  net.V1 = gaussian_linear(prefix + ".V1", 2, hidden, rng);
  net.c1 = zeros(prefix + ".c1", {hidden});
  net.V2 = gaussian_linear(prefix + ".V2", hidden, 2, rng);
  net.c2 = zeros(prefix + ".c2", {2});
  return net;
}

void ChartNet::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&V1, &c1, &V2, &c2}) out.push_back(p);
}

Tensor ChartCoords::as_tensor() const {
  Tensor t({xi.size(), 2});
  for (std::size_t n = 0; n < xi.size(); ++n) {
    t[2 * n] = xi[n];
    t[2 * n + 1] = eta[n];
  }
  return t;
}

ChartCoords ChartCoords::from_tensor(const Tensor& zeta) {
  if (zeta.rank() != 2 || zeta.dim(1) != 2) throw ShapeError("chart tensor must be [N, 2], got " + shape_str(zeta.shape()));
  ChartCoords z;
  const std::size_t n = zeta.dim(0);
  z.xi.resize(n);
  z.eta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    z.xi[i] = zeta[2 * i];
    z.eta[i] = zeta[2 * i + 1];
  }
  return z;
}

Var chart_forward(Tape& tape, ChartNet& net, const Var& coords) {
  if (coords.value().rank() != 2 || coords.dim(1) != 2) {
    throw ShapeError("chart expects [N, 2] coordinates, got " + shape_str(coords.shape()));
  }
  Var h = ops::silu(ops::add(ops::matmul(coords, tape.param(net.V1)), tape.param(net.c1)));
  return ops::tanh(ops::add(ops::matmul(h, tape.param(net.V2)), tape.param(net.c2)));
}

ChartCoords chart_forward(ChartNet& net, const Tensor& coords) {
  Tape tape;
  Var z = chart_forward(tape, net, tape.constant(coords));
  return ChartCoords::from_tensor(z.value());
}

ChartCoords chart_forward(ChartNet& net, const Mesh& mesh) { return chart_forward(net, mesh.coords()); }

ChartCoords chart_perturb(const ChartCoords& z, double delta, CounterRng& rng) {
  if (!(delta >= 0.0)) throw ConfigError("chart perturbation size must be non-negative");
  ChartCoords out = z;
  if (delta == 0.0) return out;
  for (std::size_t n = 0; n < z.size(); ++n) {
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    out.xi[n] = std::clamp(z.xi[n] + delta * std::cos(angle), -1.0, 1.0);
    out.eta[n] = std::clamp(z.eta[n] + delta * std::sin(angle), -1.0, 1.0);
  }
  return out;
}

void write_chart_csv(const std::filesystem::path& path, const Mesh& mesh, const ChartCoords& z) {
  if (z.size() != mesh.nodes()) throw ShapeError("chart size does not match mesh");
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "'");
  os << "x,y,xi,eta\n" << std::setprecision(17);
  for (std::size_t n = 0; n < mesh.nodes(); ++n) {
    os << mesh.xy[2 * n] << ',' << mesh.xy[2 * n + 1] << ',' << z.xi[n] << ',' << z.eta[n] << '\n';
  }
}

}  // namespace cato
