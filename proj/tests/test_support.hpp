#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "fkdmc/fk_core.hpp"

namespace fkdmc::testing {

/// Two-state model used throughout the tests: Q = diag(G) M has trace 1.0
/// and determinant 0.15, so lambda = (1 + sqrt(0.4)) / 2.
inline FiniteFkModel two_state_model() {
  return FiniteFkModel({{0.7, 0.3}, {0.4, 0.6}}, {1.0, 0.5}, {0.5, 0.5});
}

inline const double kTwoStateLambda = (1.0 + std::sqrt(0.4)) / 2.0;

/// Random d-state model with strictly positive kernel and potentials in [0.2, 2].
inline FiniteFkModel random_model(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::uniform_real_distribution<double> g(0.2, 2.0);
  std::vector<std::vector<double>> m(d, std::vector<double>(d));
  std::vector<double> pot(d);
  std::vector<double> eta0(d);
  for (std::size_t x = 0; x < d; ++x) {
    double s = 0.0;
    for (auto& v : m[x]) s += (v = u(rng));
    for (auto& v : m[x]) v /= s;
    pot[x] = g(rng);
  }
  double s = 0.0;
  for (auto& v : eta0) s += (v = u(rng));
  for (auto& v : eta0) v /= s;
  return FiniteFkModel(std::move(m), std::move(pot), std::move(eta0));
}

/// Pearson chi-square goodness-of-fit p-value.
inline double chi_square_p_value(const std::vector<double>& observed,
                                 const std::vector<double>& probabilities) {
  double total = 0.0;
  for (double o : observed) total += o;
  double stat = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double expected = total * probabilities[i];
    if (expected <= 0.0) continue;
    stat += (observed[i] - expected) * (observed[i] - expected) / expected;
    ++cells;
  }
  const boost::math::chi_squared dist(static_cast<double>(cells - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace fkdmc::testing
