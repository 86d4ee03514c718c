#pragma once

// Exact Feynman-Kac semigroup computations on a finite state space.
//
// Everything here is a pure function of its inputs. These routines are the
// reference against which the particle engine and the estimators are checked.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fkdmc/error.hpp"
#include "fkdmc/kahan.hpp"

namespace fkdmc {

/// Row-stochastic kernel M, potential G and initial law eta0 on {0, ..., d-1}.
/// Q(x, y) = G(x) M(x, y) is implied.
class FiniteFkModel {
 public:
  static constexpr double kStochasticTolerance = 1e-12;

  FiniteFkModel(std::vector<std::vector<double>> kernel,
                std::vector<double> potential, std::vector<double> eta0)
      : kernel_(std::move(kernel)),
        potential_(std::move(potential)),
        eta0_(std::move(eta0)) {
    validate();
  }

  std::size_t size() const { return potential_.size(); }
  const std::vector<std::vector<double>>& kernel() const { return kernel_; }
  const std::vector<double>& potential() const { return potential_; }
  const std::vector<double>& eta0() const { return eta0_; }

  double kernel(std::size_t x, std::size_t y) const { return kernel_[x][y]; }
  double potential(std::size_t x) const { return potential_[x]; }

 private:
  void validate() const {
    const std::size_t d = potential_.size();
    if (d == 0) throw ConfigError("finite model: state count must be positive");
    if (kernel_.size() != d) {
      throw ConfigError("finite model: M has " + std::to_string(kernel_.size()) +
                        " rows but G has " + std::to_string(d) + " entries");
    }
    for (std::size_t x = 0; x < d; ++x) {
      const auto& row = kernel_[x];
      if (row.size() != d) {
        throw ConfigError("finite model: M row " + std::to_string(x) + " has " +
                          std::to_string(row.size()) + " entries, expected " +
                          std::to_string(d));
      }
      KahanSum total;
      for (std::size_t y = 0; y < d; ++y) {
        if (!std::isfinite(row[y]) || row[y] < 0.0) {
          throw ConfigError("finite model: M[" + std::to_string(x) + "][" +
                            std::to_string(y) + "] must be finite and >= 0");
        }
        total += row[y];
      }
      if (std::fabs(total.value() - 1.0) > kStochasticTolerance) {
        throw ConfigError("finite model: M row " + std::to_string(x) +
                          " sums to " + std::to_string(total.value()) +
                          ", expected 1");
      }
    }
    for (std::size_t x = 0; x < d; ++x) {
      if (!std::isfinite(potential_[x]) || potential_[x] <= 0.0) {
        throw ConfigError("finite model: G[" + std::to_string(x) +
                          "] must be finite and > 0");
      }
    }
    if (eta0_.size() != d) {
      throw ConfigError("finite model: eta0 has " + std::to_string(eta0_.size()) +
                        " entries, expected " + std::to_string(d));
    }
    KahanSum mass;
    for (std::size_t x = 0; x < d; ++x) {
      if (!std::isfinite(eta0_[x]) || eta0_[x] < 0.0) {
        throw ConfigError("finite model: eta0[" + std::to_string(x) +
                          "] must be finite and >= 0");
      }
      mass += eta0_[x];
    }
    if (std::fabs(mass.value() - 1.0) > kStochasticTolerance) {
      throw ConfigError("finite model: eta0 sums to " +
                        std::to_string(mass.value()) + ", expected 1");
    }
  }

  std::vector<std::vector<double>> kernel_;
  std::vector<double> potential_;
  std::vector<double> eta0_;
};

/// Parses {"M": [[...]], "G": [...], "eta0": [...]}. Unknown keys are rejected.
inline FiniteFkModel finite_model_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("finite model: expected a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "M" && key != "G" && key != "eta0" && key != "type") {
      throw ConfigError("finite model: unknown key '" + key + "'");
    }
  }
  for (const char* key : {"M", "G", "eta0"}) {
    if (!doc.contains(key)) {
      throw ConfigError(std::string("finite model: missing key '") + key + "'");
    }
  }
  auto numbers = [](const nlohmann::json& arr, const std::string& where) {
    if (!arr.is_array()) throw ConfigError("finite model: " + where + " must be an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) {
        throw ConfigError("finite model: " + where + "[" + std::to_string(i) +
                          "] is not a number");
      }
      out.push_back(arr[i].get<double>());
    }
    return out;
  };
  const auto& m = doc.at("M");
  if (!m.is_array()) throw ConfigError("finite model: M must be an array of rows");
  std::vector<std::vector<double>> kernel;
  for (std::size_t r = 0; r < m.size(); ++r) {
    kernel.push_back(numbers(m[r], "M[" + std::to_string(r) + "]"));
  }
  return FiniteFkModel(std::move(kernel), numbers(doc.at("G"), "G"),
                       numbers(doc.at("eta0"), "eta0"));
}

inline nlohmann::json to_json(const FiniteFkModel& model) {
  return {{"type", "finite"},
          {"M", model.kernel()},
          {"G", model.potential()},
          {"eta0", model.eta0()}};
}

/// A finite non-negative measure; `normalized` marks a probability vector.
struct MeasureVector {
  std::vector<double> weights;
  bool normalized = false;

  std::size_t size() const { return weights.size(); }
  double operator[](std::size_t i) const { return weights[i]; }

  double integrate(std::span<const double> phi) const {
    if (phi.size() != weights.size()) {
      throw InvalidArgument("measure/function dimension mismatch");
    }
    KahanSum s;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * phi[i];
    return s.value();
  }

  double mass() const {
    KahanSum s;
    for (double w : weights) s += w;
    return s.value();
  }

  static MeasureVector probability(std::vector<double> w) {
    MeasureVector m{std::move(w), false};
    const double total = m.mass();
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw DegenerateMeasure("cannot normalize a measure with mass " +
                              std::to_string(total));
    }
    for (double& x : m.weights) x /= total;
    m.normalized = true;
    return m;
  }
};

/// Dominant eigen-structure of Q: Q h = lambda h, eta_inf Q = lambda eta_inf.
struct Eigentriple {
  double lambda = 0.0;
  std::vector<double> h;        // sup-norm 1
  std::vector<double> eta_inf;  // sums to 1
  double residual = 0.0;        // max of the two eigen-equation residuals
  std::size_t iterations = 0;
};

namespace detail {

inline void check_dim(const FiniteFkModel& model, std::size_t n, const char* what) {
  if (n != model.size()) {
    throw InvalidArgument(std::string(what) + " has dimension " + std::to_string(n) +
                          ", model has " + std::to_string(model.size()) + " states");
  }
}

}  // namespace detail

/// Q(phi)(x) = G(x) sum_y M(x, y) phi(y).
inline std::vector<double> q_apply(const FiniteFkModel& model,
                                   std::span<const double> phi) {
  detail::check_dim(model, phi.size(), "phi");
  const std::size_t d = model.size();
  std::vector<double> out(d);
  for (std::size_t x = 0; x < d; ++x) {
    KahanSum s;
    for (std::size_t y = 0; y < d; ++y) s += model.kernel(x, y) * phi[y];
    out[x] = model.potential(x) * s.value();
  }
  return out;
}

/// Left action mu -> mu Q, as a vector indexed by the target state.
inline std::vector<double> q_left_apply(const FiniteFkModel& model,
                                        std::span<const double> mu) {
  detail::check_dim(model, mu.size(), "measure");
  const std::size_t d = model.size();
  std::vector<KahanSum> acc(d);
  for (std::size_t x = 0; x < d; ++x) {
    const double w = mu[x] * model.potential(x);
    for (std::size_t y = 0; y < d; ++y) acc[y] += w * model.kernel(x, y);
  }
  std::vector<double> out(d);
  for (std::size_t y = 0; y < d; ++y) out[y] = acc[y].value();
  return out;
}

/// Phi(eta) = eta Q / eta Q(1): reweight by G, then move with M.
inline MeasureVector phi_map(const FiniteFkModel& model, const MeasureVector& eta) {
  detail::check_dim(model, eta.size(), "eta");
  const double mass = eta.integrate(model.potential());
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw DegenerateMeasure("phi_map: eta(G) = " + std::to_string(mass));
  }
  std::vector<double> next = q_left_apply(model, eta.weights);
  for (double& v : next) v /= mass;
  return MeasureVector{std::move(next), true};
}

/// One entry of the exact flow: eta_k, eta_k(G) and log gamma_k(1).
struct EtaStep {
  MeasureVector eta;
  double eta_of_g = 0.0;
  double log_gamma_mass = 0.0;  // sum_{p<k} log eta_p(G)
};

/// eta_0 .. eta_n with gamma_k(1) = prod_{p<k} eta_p(G) kept in log space.
inline std::vector<EtaStep> exact_eta_sequence(const FiniteFkModel& model,
                                               std::size_t n) {
  std::vector<EtaStep> out;
  out.reserve(n + 1);
  MeasureVector eta{model.eta0(), true};
  KahanSum log_mass;
  for (std::size_t k = 0;; ++k) {
    const double eg = eta.integrate(model.potential());
    out.push_back(EtaStep{eta, eg, log_mass.value()});
    if (k == n) break;
    log_mass += std::log(eg);
    eta = phi_map(model, eta);
  }
  return out;
}

/// Phi^l(mu)(phi) = mu Q^l(phi) / mu Q^l(1).
inline double lag_limit(const FiniteFkModel& model, const MeasureVector& mu,
                        std::size_t lag, std::span<const double> phi) {
  detail::check_dim(model, mu.size(), "mu");
  detail::check_dim(model, phi.size(), "phi");
  std::vector<double> num(phi.begin(), phi.end());
  std::vector<double> den(model.size(), 1.0);
  for (std::size_t i = 0; i < lag; ++i) {
    num = q_apply(model, num);
    den = q_apply(model, den);
    // Rescale both by the same factor so long lags stay in range.
    const double scale = *std::max_element(den.begin(), den.end());
    for (double& v : num) v /= scale;
    for (double& v : den) v /= scale;
  }
  return mu.integrate(num) / mu.integrate(den);
}

inline Eigentriple power_iteration(const FiniteFkModel& model, double tol = 1e-12,
                                   std::size_t max_iters = 1'000'000) {
  if (!(tol > 0.0)) throw InvalidArgument("power_iteration: tol must be > 0");
  const std::size_t d = model.size();
  std::vector<double> h(d, 1.0);
  std::vector<double> eta(d, 1.0 / static_cast<double>(d));

  auto sup_normalize = [](std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    for (double& x : v) x /= m;
  };
  auto mass_normalize = [](std::vector<double>& v) {
    KahanSum s;
    for (double x : v) s += x;
    const double m = s.value();
    for (double& x : v) x /= m;
  };

  double change = 0.0;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    auto h_next = q_apply(model, h);
    sup_normalize(h_next);
    auto eta_next = q_left_apply(model, eta);
    mass_normalize(eta_next);

    double dh = 0.0;
    double deta = 0.0;
    for (std::size_t x = 0; x < d; ++x) {
      dh = std::max(dh, std::fabs(h_next[x] - h[x]));
      deta += std::fabs(eta_next[x] - eta[x]);
    }
    h = std::move(h_next);
    eta = std::move(eta_next);
    change = std::max(dh, deta);
    if (change <= tol) {
      Eigentriple out;
      out.h = std::move(h);
      out.eta_inf = std::move(eta);
      out.lambda = MeasureVector{out.eta_inf, true}.integrate(model.potential());
      const auto qh = q_apply(model, out.h);
      const auto etaq = q_left_apply(model, out.eta_inf);
      double rh = 0.0;
      double reta = 0.0;
      for (std::size_t x = 0; x < d; ++x) {
        rh = std::max(rh, std::fabs(qh[x] - out.lambda * out.h[x]));
        reta += std::fabs(etaq[x] - out.lambda * out.eta_inf[x]);
      }
      out.residual = std::max(rh, reta);
      out.iterations = it;
      return out;
    }
  }
  throw ConvergenceError("power_iteration: no convergence after " +
                             std::to_string(max_iters) + " sweeps",
                         change);
}

/// Particle configuration of one time step: the state of each walker.
using FiniteConfiguration = std::vector<std::size_t>;

/// Path functional over (xi_0, ..., xi_n) of a finite particle system.
using PathStatistic = std::function<double(std::span<const FiniteConfiguration>)>;

/// Upper bound on d^(N (n+1)) accepted by exact_particle_expectation.
inline constexpr double kMaxEnumeratedConfigurations = 1e7;

/// Exact expectation of `statistic` under the law of the N-walker system,
/// obtained by enumerating every trajectory (xi_0, ..., xi_n). Each walker at
/// step p is drawn independently from Phi(m(xi_{p-1})).
inline double exact_particle_expectation(const FiniteFkModel& model,
                                         std::size_t walkers, std::size_t steps,
                                         const PathStatistic& statistic) {
  if (walkers == 0) throw InvalidArgument("exact_particle_expectation: N must be >= 1");
  const std::size_t d = model.size();
  const double count = std::pow(static_cast<double>(d),
                                static_cast<double>(walkers * (steps + 1)));
  if (count > kMaxEnumeratedConfigurations) {
    throw SizeLimitError("exact_particle_expectation: " + std::to_string(count) +
                         " trajectories exceed the enumeration limit");
  }

  std::vector<FiniteConfiguration> path(steps + 1, FiniteConfiguration(walkers));
  KahanSum total;

  // Visit every configuration of one step drawn i.i.d. from `law`.
  auto for_each_configuration = [&](std::size_t p, const std::vector<double>& law,
                                    const auto& visit) {
    auto& conf = path[p];
    std::fill(conf.begin(), conf.end(), 0);
    while (true) {
      double prob = 1.0;
      for (std::size_t i = 0; i < walkers; ++i) prob *= law[conf[i]];
      if (prob > 0.0) visit(prob);
      std::size_t i = 0;
      while (i < walkers && ++conf[i] == d) conf[i++] = 0;
      if (i == walkers) break;
    }
  };

  auto recurse = [&](auto&& self, std::size_t p, double prob) -> void {
    if (p == steps) {
      total += prob * statistic(path);
      return;
    }
    std::vector<double> occupation(d, 0.0);
    for (std::size_t x : path[p]) occupation[x] += 1.0 / static_cast<double>(walkers);
    const auto law = phi_map(model, MeasureVector{std::move(occupation), true}).weights;
    for_each_configuration(p + 1, law,
                           [&](double q) { self(self, p + 1, prob * q); });
  };

  for_each_configuration(0, model.eta0(), [&](double q) { recurse(recurse, 0, q); });
  return total.value();
}

/// m(xi)(phi) for a finite configuration.
inline double occupation_average(const FiniteConfiguration& conf,
                                 std::span<const double> phi) {
  KahanSum s;
  for (std::size_t x : conf) s += phi[x];
  return s.value() / static_cast<double>(conf.size());
}

/// gamma^N_n(phi) = m(xi_n)(phi) prod_{p<n} m(xi_p)(G), as a path statistic.
inline PathStatistic particle_gamma(const FiniteFkModel& model, std::vector<double> phi) {
  return [g = model.potential(), phi = std::move(phi)](
             std::span<const FiniteConfiguration> path) {
    double prod = 1.0;
    for (std::size_t p = 0; p + 1 < path.size(); ++p) prod *= occupation_average(path[p], g);
    return occupation_average(path.back(), phi) * prod;
  };
}

}  // namespace fkdmc
