#pragma once

// Self-checks on finite models: the semigroup identities that the exact
// oracle must satisfy, and unbiasedness of the particle estimate of gamma_n(1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkdmc/dmc_engine.hpp"
#include "fkdmc/experiments.hpp"
#include "fkdmc/fk_core.hpp"
#include "fkdmc/models.hpp"

namespace fkdmc {

struct IdentityCheck {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass() const { return error <= tolerance; }
};

struct OracleReport {
  Eigentriple eigen;
  std::vector<IdentityCheck> identities;

  bool pass() const {
    return std::all_of(identities.begin(), identities.end(), [](const auto& c) { return c.pass(); });
  }
  const IdentityCheck* first_failure() const {
    for (const auto& c : identities) {
      if (!c.pass()) return &c;
    }
    return nullptr;
  }
};

inline OracleReport oracle_check(const FiniteFkModel& model, double tol = 1e-12) {
  OracleReport rep;
  rep.eigen = power_iteration(model, tol);
  const auto& eig = rep.eigen;
  const std::size_t d = model.size();
  const MeasureVector eta_inf{eig.eta_inf, true};
  const MeasureVector eta0{model.eta0(), true};

  const auto qh = q_apply(model, eig.h);
  const auto etaq = q_left_apply(model, eig.eta_inf);
  double right = 0.0;
  double left = 0.0;
  for (std::size_t x = 0; x < d; ++x) {
    right = std::max(right, std::fabs(qh[x] - eig.lambda * eig.h[x]));
    left += std::fabs(etaq[x] - eig.lambda * eig.eta_inf[x]);
  }
  rep.identities.push_back({"Q h = lambda h (sup norm)", right, 1e-10});
  rep.identities.push_back({"eta_inf Q = lambda eta_inf (L1)", left, 1e-10});

  // h has sup norm 1, so the right eigenvalue is max_x Q h(x).
  const double lambda_right = *std::max_element(qh.begin(), qh.end());
  rep.identities.push_back(
      {"eta_inf(G) = lambda", std::fabs(eta_inf.integrate(model.potential()) - lambda_right), 1e-10});

  const auto fixed = phi_map(model, eta_inf);
  double fp = 0.0;
  for (std::size_t x = 0; x < d; ++x) fp += std::fabs(fixed[x] - eta_inf[x]);
  rep.identities.push_back({"Phi(eta_inf) = eta_inf (L1)", fp, 10.0 * tol});

  // Test functions: G and every indicator.
  std::vector<std::vector<double>> phis{model.potential()};
  for (std::size_t s = 0; s < d; ++s) {
    std::vector<double> e(d, 0.0);
    e[s] = 1.0;
    phis.push_back(std::move(e));
  }
  const std::vector<double> one(d, 1.0);

  double unit = 0.0;
  double lag_lambda = 0.0;
  double eigen_consistency = 0.0;
  for (std::size_t l = 0; l <= 10; ++l) {
    unit = std::max({unit, std::fabs(lag_limit(model, eta0, l, one) - 1.0),
                     std::fabs(lag_limit(model, eta_inf, l, one) - 1.0)});
    lag_lambda = std::max(lag_lambda, std::fabs(lag_limit(model, eta_inf, l, model.potential()) -
                                                eig.lambda));
    for (const auto& phi : phis) {
      std::vector<double> v = phi;
      for (std::size_t i = 0; i < l; ++i) v = q_apply(model, v);
      const double lhs = eta_inf.integrate(v) / std::pow(eig.lambda, static_cast<double>(l));
      eigen_consistency = std::max(eigen_consistency, std::fabs(lhs - eta_inf.integrate(phi)));
    }
  }
  rep.identities.push_back({"Phi^l(mu)(1) = 1, l <= 10", unit, 0.0});
  rep.identities.push_back({"Phi^l(eta_inf)(G) = lambda, l <= 10", lag_lambda, 1e-10});
  rep.identities.push_back({"eta_inf Q^l(phi) = lambda^l eta_inf(phi), l <= 10", eigen_consistency, 1e-8});

  double semigroup = 0.0;
  MeasureVector pushed = eta0;
  for (std::size_t a = 0; a <= 5; ++a) {
    for (std::size_t b = 0; b <= 5; ++b) {
      for (const auto& phi : phis) {
        semigroup = std::max(semigroup, std::fabs(lag_limit(model, eta0, a + b, phi) -
                                                  lag_limit(model, pushed, b, phi)));
      }
    }
    pushed = phi_map(model, pushed);
  }
  rep.identities.push_back({"Phi^(a+b) = Phi^b o Phi^a, a,b <= 5", semigroup, 1e-10});
  return rep;
}

inline nlohmann::json to_json(const OracleReport& rep) {
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& c : rep.identities) {
    ids.push_back({{"name", c.name}, {"error", c.error}, {"tolerance", c.tolerance}, {"pass", c.pass()}});
  }
  return {{"lambda", rep.eigen.lambda},
          {"h", rep.eigen.h},
          {"eta_inf", rep.eigen.eta_inf},
          {"residual", rep.eigen.residual},
          {"iterations", rep.eigen.iterations},
          {"identities", ids},
          {"pass", rep.pass()}};
}

struct UnbiasednessReport {
  std::size_t walkers = 0;
  std::size_t steps = 0;
  std::size_t runs = 0;
  double exact = 0.0;       // enumeration of the particle system
  double oracle = 0.0;      // gamma_n(1) from the exact flow
  double mc_mean = 0.0;     // engine sample mean
  double mc_se = 0.0;
  static constexpr double kExactTolerance = 1e-12;
  static constexpr double kMaxStandardErrors = 4.0;

  double exact_error() const { return std::fabs(exact - oracle); }
  double z_score() const {
    if (mc_se > 0.0) return (mc_mean - exact) / mc_se;
    // Degenerate sample (e.g. n = 0): every run returns the same value.
    return std::fabs(mc_mean - exact) <= kExactTolerance ? 0.0
                                                         : std::numeric_limits<double>::infinity();
  }
  bool exact_pass() const { return exact_error() <= kExactTolerance; }
  bool mc_pass() const { return std::fabs(z_score()) <= kMaxStandardErrors; }
  bool pass() const { return exact_pass() && mc_pass(); }
};

/// Compares E[gamma^N_n(1)] computed three ways: exact enumeration of the
/// particle system, the deterministic flow, and the engine over `runs`
/// replications. `Resampler` is injectable so a broken scheme can be shown
/// to fail.
template <class Resampler = MultinomialSelection>
UnbiasednessReport unbiasedness_check(const FiniteFkModel& model, std::size_t walkers,
                                      std::size_t steps, std::size_t runs,
                                      std::uint64_t master_seed, const Resampler& resample = {}) {
  if (runs < 2) throw InvalidArgument("unbiasedness_check: need at least two runs");
  UnbiasednessReport rep;
  rep.walkers = walkers;
  rep.steps = steps;
  rep.runs = runs;
  const std::vector<double> one(model.size(), 1.0);
  rep.exact = exact_particle_expectation(model, walkers, steps, particle_gamma(model, one));
  rep.oracle = std::exp(exact_eta_sequence(model, steps).back().log_gamma_mass);

  const FiniteAdapter adapter(model);
  const auto functions = make_test_functions(adapter, {TestFunctionSpec{"one", {}, {}}});
  std::vector<double> samples;
  samples.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    RngStream rng(master_seed, r, StreamRole::kTrajectory);
    const auto records =
        simulate_records(adapter, walkers, steps + 1, functions, rng, 0, resample);
    double gamma = records.back().f[0];
    for (std::size_t p = 0; p < steps; ++p) gamma *= records[p].g;
    samples.push_back(gamma);
  }
  rep.mc_mean = stats::mean(samples);
  rep.mc_se = std::sqrt(stats::variance(samples) / static_cast<double>(runs));
  return rep;
}

inline nlohmann::json to_json(const UnbiasednessReport& rep) {
  return {{"N", rep.walkers},
          {"n", rep.steps},
          {"runs", rep.runs},
          {"exact_expectation", rep.exact},
          {"oracle_gamma", rep.oracle},
          {"exact_error", rep.exact_error()},
          {"mc_mean", rep.mc_mean},
          {"mc_se", rep.mc_se},
          {"z_score", rep.z_score()},
          {"exact_pass", rep.exact_pass()},
          {"mc_pass", rep.mc_pass()},
          {"pass", rep.pass()}};
}

}  // namespace fkdmc
