#include "cato/init.hpp"

#include <algorithm>
#include <cmath>

namespace cato {

Parameter gaussian_linear(std::string name, std::size_t fan_in, std::size_t fan_out, CounterRng& rng) {
  Tensor w({fan_in, fan_out});
  const double std = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : w.data()) v = std * rng.normal();
  return Parameter(std::move(name), std::move(w));
}

Parameter zeros(std::string name, Shape shape) { return Parameter(std::move(name), Tensor(std::move(shape), 0.0)); }

Parameter constant(std::string name, Shape shape, double value) {
  return Parameter(std::move(name), Tensor(std::move(shape), value));
}

}  // namespace cato
