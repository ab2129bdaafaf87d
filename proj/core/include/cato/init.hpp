#pragma once

#include <string>

#include "cato/autodiff.hpp"
#include "cato/rng.hpp"

namespace cato {

/// Gaussian weights with std 1/sqrt(fan_in), shape [fan_in, fan_out].
Parameter gaussian_linear(std::string name, std::size_t fan_in, std::size_t fan_out, CounterRng& rng);
Parameter zeros(std::string name, Shape shape);
Parameter constant(std::string name, Shape shape, double value);

}  // namespace cato
