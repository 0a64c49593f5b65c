#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mlf/grad_check.hpp"
#include "mlf/ops.hpp"
#include "mlf/tensor.hpp"

namespace mlf::testing {

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true,
                            double lo = -1.0, double hi = 1.0) {
  const auto n = shape_numel(shape);
  return Tensor::from(std::move(shape), random_values(n, rng, lo, hi), requires_grad);
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

/// Random linear functional of `y`, so every output element gets a distinct
/// upstream gradient.
inline Tensor probe(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

inline std::size_t rand_dim(std::mt19937_64& rng, std::size_t lo = 1, std::size_t hi = 8) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace mlf::testing
