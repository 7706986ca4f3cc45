#pragma once

#include <cmath>
#include <random>

#include "memvqa/tensor.hpp"

namespace memvqa {

// Entries drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename Real>
Tensor<Real> uniform_fan_in(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor<Real> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(dist(rng));
  return t;
}

}  // namespace memvqa
