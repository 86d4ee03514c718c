#pragma once

// Replicated runs of the particle system, per-lag aggregation across runs,
// and the bias-decay fit.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include "fkdmc/config.hpp"
#include "fkdmc/dmc_engine.hpp"
#include "fkdmc/estimators.hpp"
#include "fkdmc/fk_core.hpp"
#include "fkdmc/models.hpp"
#include "fkdmc/rng.hpp"
#include "fkdmc/stats.hpp"

namespace fkdmc {

/// Evaluates one test function on a walker state. `uses_potential` marks
/// phi = G, which is read from the already computed weights so that f and g
/// are bit-identical.
template <class State>
struct TestFunction {
  bool uses_potential = false;
  std::function<double(const State&)> eval;
};

template <SimulatableFkModel Model>
std::vector<TestFunction<typename Model::state_type>> make_test_functions(
    const Model& model, const std::vector<TestFunctionSpec>& specs) {
  using State = typename Model::state_type;
  std::vector<TestFunction<State>> out;
  for (const auto& spec : specs) {
    if (spec.kind == "G") {
      out.push_back({true, [&model](const State& x) { return static_cast<double>(model.potential(x)); }});
    } else if (spec.kind == "one") {
      out.push_back({false, [](const State&) { return 1.0; }});
    } else if constexpr (std::is_same_v<State, std::size_t>) {
      if (spec.kind == "indicator") {
        out.push_back({false, [states = spec.states](const State& x) {
                         return std::find(states.begin(), states.end(), x) != states.end() ? 1.0 : 0.0;
                       }});
      } else if (spec.kind == "vector") {
        out.push_back({false, [values = spec.values](const State& x) { return values.at(x); }});
      } else {
        throw ConfigError("unknown test function '" + spec.kind + "'");
      }
    } else {
      throw ConfigError("test function '" + spec.kind + "' needs a finite model");
    }
  }
  return out;
}

/// Runs the particle system and returns `record_count` step records taken
/// after `burn_in` unrecorded steps. Record p summarizes the population
/// before the p-th selection/mutation.
template <SimulatableFkModel Model, class Resampler = MultinomialSelection>
std::vector<StepRecord> simulate_records(
    const Model& model, std::size_t walkers, std::size_t record_count,
    const std::vector<TestFunction<typename Model::state_type>>& functions, RngStream& rng,
    std::size_t burn_in = 0, const Resampler& resample = {}) {
  auto pop = init_population(model, walkers, rng);
  std::vector<StepRecord> records;
  records.reserve(record_count);
  std::vector<double> weights;
  for (std::size_t t = 0; t < burn_in + record_count; ++t) {
    weights = walker_potentials(model, pop);
    if (t >= burn_in) {
      StepRecord rec;
      rec.step = t - burn_in;
      rec.g = empirical_average(weights);
      rec.f.reserve(functions.size());
      for (const auto& fn : functions) {
        rec.f.push_back(fn.uses_potential ? empirical_average(weights)
                                          : empirical_average(pop, fn.eval));
      }
      records.push_back(std::move(rec));
      if (records.size() == record_count) break;
    }
    pop = step(model, pop, std::span<const double>(weights), rng, resample);
  }
  return records;
}

struct ReplicationReport {
  std::size_t replication_index = 0;
  std::uint64_t trajectory_seed = 0;
  std::uint64_t independent_seed = 0;
  std::vector<std::size_t> lags;
  std::vector<double> estimate;                     // per lag, estimate_function
  std::optional<std::vector<double>> independent;   // per lag, if variance_compare
  std::vector<double> batch_se;                     // per lag, sqrt(sigma2 / n)
  double standard_estimate = 0.0;                   // (1/n) sum_k eta^N_k(G)
  EstimateReport full;                              // every test function
  double runtime_seconds = 0.0;
};

namespace detail {

template <SimulatableFkModel Model>
ReplicationReport run_replication_with(const Model& model, const ExperimentConfig& cfg,
                                       std::size_t replication_index) {
  const auto start = std::chrono::steady_clock::now();
  const auto functions = make_test_functions(model, cfg.test_functions);
  const std::size_t record_count = cfg.windows + cfg.max_lag();

  RngStream rng(cfg.master_seed, replication_index, StreamRole::kTrajectory);
  const auto records = simulate_records(model, cfg.walkers, record_count, functions, rng, cfg.burn_in);

  ReplicationReport rep;
  rep.replication_index = replication_index;
  rep.trajectory_seed = derive_seed(cfg.master_seed, replication_index, StreamRole::kTrajectory);
  rep.independent_seed =
      derive_seed(cfg.master_seed, replication_index, StreamRole::kIndependentCopy);
  rep.lags = cfg.lags;

  const std::span<const StepRecord> all(records);
  rep.full = lagged_estimate(all, cfg.lags, cfg.windows);
  rep.standard_estimate = standard_estimator(all.first(cfg.windows));
  for (std::size_t lag : cfg.lags) {
    rep.estimate.push_back(rep.full.at(lag, cfg.estimate_function));
    const std::size_t batches = cfg.batch_count.value_or(
        static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(cfg.windows)))));
    if (batches >= 2 && cfg.windows >= batches) {
      const auto bm = batch_means_variance(all, lag, cfg.estimate_function, batches, cfg.windows);
      rep.batch_se.push_back(std::sqrt(bm.variance_of_mean));
    } else {
      rep.batch_se.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }

  if (cfg.variance_compare) {
    RngStream other(cfg.master_seed, replication_index, StreamRole::kIndependentCopy);
    const auto copy =
        simulate_records(model, cfg.walkers, record_count, functions, other, cfg.burn_in);
    rep.independent = independent_ratio(all, copy, cfg.lags, cfg.estimate_function);
  }
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace detail

/// Applies `fn` to the concrete simulatable model behind a ModelSpec.
template <class Fn>
decltype(auto) visit_simulatable(const ModelSpec& spec, Fn&& fn) {
  return std::visit(
      [&](const auto& m) -> decltype(auto) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, FiniteFkModel>) {
          const FiniteAdapter adapter(m);
          return fn(adapter);
        } else {
          return fn(m);
        }
      },
      spec);
}

inline ReplicationReport run_replication(const ExperimentConfig& cfg,
                                         std::size_t replication_index) {
  validate(cfg);
  return visit_simulatable(cfg.model, [&](const auto& model) {
    return detail::run_replication_with(model, cfg, replication_index);
  });
}

/// Runs replications 0..R-1 on up to cfg.workers threads. Reports come back
/// ordered by replication index whatever the completion order.
inline std::vector<ReplicationReport> run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<ReplicationReport> reports(cfg.replications);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::size_t failed_index = 0;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.replications) return;
      {
        std::lock_guard lock(error_mutex);
        if (first_error) return;
      }
      try {
        reports[i] = run_replication(cfg, i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error || i < failed_index) {
          first_error = std::current_exception();
          failed_index = i;
        }
      }
    }
  };

  const std::size_t threads = std::min(cfg.workers, cfg.replications);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      throw Error("replication " + std::to_string(failed_index) + " failed (master_seed=" +
                  std::to_string(cfg.master_seed) + ", replication_index=" +
                  std::to_string(failed_index) + ", role=trajectory): " + e.what());
    }
  }
  return reports;
}

struct Reference {
  double value = 0.0;
  std::string provenance;
};

/// Target value of the estimated test function in the large-lag limit.
inline Reference reference_value(const ExperimentConfig& cfg) {
  const auto& phi = cfg.test_functions.at(cfg.estimate_function);
  if (phi.kind == "one") return {1.0, "constant test function"};
  return std::visit(
      [&](const auto& m) -> Reference {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, FiniteFkModel>) {
          const auto eig = power_iteration(m);
          if (phi.kind == "G") return {eig.lambda, "power iteration: lambda = eta_inf(G)"};
          std::vector<double> values(m.size(), 0.0);
          if (phi.kind == "indicator") {
            for (std::size_t s : phi.states) values[s] = 1.0;
          } else {
            values = phi.values;
          }
          return {MeasureVector{eig.eta_inf, true}.integrate(values),
                  "power iteration: eta_inf(phi)"};
        } else if constexpr (std::is_same_v<M, HarmonicOscillatorModel>) {
          if (phi.kind != "G") throw NoReference("no closed-form reference for this test function");
          return {m.reference_lambda(), "closed form: exp(-tau * omega / 2)"};
        } else {
          if (phi.kind != "G") throw NoReference("no closed-form reference for this test function");
          return {m.reference_lambda(),
                  "closed form: exp(-tau / 2), importance sampling preserves the spectrum"};
        }
      },
      cfg.model);
}

struct LagAggregate {
  std::size_t lag = 0;
  double mean_estimate = 0.0;
  double abs_bias = std::numeric_limits<double>::quiet_NaN();
  double log_abs_bias = std::numeric_limits<double>::quiet_NaN();
  double se_mean = std::numeric_limits<double>::quiet_NaN();
  double var_joint = std::numeric_limits<double>::quiet_NaN();
  double var_independent = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_runs = 0;
};

struct BiasFit {
  stats::LineFit line;
  std::vector<std::size_t> fit_lags;
  std::string rule;
};

struct AggregateReport {
  std::vector<LagAggregate> lags;
  std::optional<Reference> reference;
  BiasFit fit;
  std::size_t replications = 0;
};

/// Lags used by the default fit: walking up from the smallest lag, keep
/// lags while |bias| > 3 se_mean; stop at the first lag inside the noise floor.
inline std::vector<std::size_t> pre_noise_floor_lags(const std::vector<LagAggregate>& rows) {
  std::vector<std::size_t> out;
  for (const auto& row : rows) {
    if (!(row.abs_bias > 3.0 * row.se_mean) || !(row.abs_bias > 0.0)) break;
    out.push_back(row.lag);
  }
  return out;
}

inline AggregateReport aggregate(std::vector<ReplicationReport> reports,
                                 std::optional<Reference> reference,
                                 std::optional<std::vector<std::size_t>> fit_lags = std::nullopt) {
  if (reports.size() < 2) throw InsufficientData("aggregate: need at least two replication reports");
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    return a.replication_index < b.replication_index;
  });
  const auto& lag_set = reports.front().lags;
  for (const auto& r : reports) {
    if (r.lags != lag_set) throw InvalidArgument("aggregate: reports disagree on the lag set");
  }

  AggregateReport out;
  out.reference = reference;
  out.replications = reports.size();
  std::vector<std::size_t> order(lag_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return lag_set[a] < lag_set[b]; });

  for (std::size_t i : order) {
    std::vector<double> joint;
    std::vector<double> indep;
    for (const auto& r : reports) {
      joint.push_back(r.estimate[i]);
      if (r.independent) indep.push_back((*r.independent)[i]);
    }
    LagAggregate row;
    row.lag = lag_set[i];
    row.n_runs = joint.size();
    row.mean_estimate = stats::mean(joint);
    row.var_joint = stats::variance(joint);
    row.se_mean = std::sqrt(row.var_joint / static_cast<double>(row.n_runs));
    if (indep.size() == joint.size()) row.var_independent = stats::variance(indep);
    if (reference) {
      row.abs_bias = std::fabs(row.mean_estimate - reference->value);
      row.log_abs_bias = std::log(row.abs_bias);
    }
    out.lags.push_back(row);
  }

  if (reference) {
    if (fit_lags) {
      out.fit.fit_lags = *fit_lags;
      std::sort(out.fit.fit_lags.begin(), out.fit.fit_lags.end());
      out.fit.rule = "configured fit_lags";
    } else {
      out.fit.fit_lags = pre_noise_floor_lags(out.lags);
      out.fit.rule = "lags from the smallest up to the first with abs_bias <= 3 * se_mean";
    }
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& row : out.lags) {
      if (std::find(out.fit.fit_lags.begin(), out.fit.fit_lags.end(), row.lag) !=
          out.fit.fit_lags.end()) {
        x.push_back(static_cast<double>(row.lag));
        y.push_back(row.log_abs_bias);
      }
    }
    out.fit.line = stats::fit_line(x, y);
  } else {
    out.fit.rule = "no reference value: fit skipped";
  }
  return out;
}

}  // namespace fkdmc
