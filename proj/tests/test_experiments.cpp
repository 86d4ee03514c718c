#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "fkdmc/config.hpp"
#include "fkdmc/experiments.hpp"
#include "test_support.hpp"

namespace fkdmc {
namespace {

ExperimentConfig two_state_config() {
  ExperimentConfig cfg;
  cfg.model = testing::two_state_model();
  cfg.walkers = 5;
  cfg.windows = 2000;
  cfg.lags = {0, 1, 5, 10};
  cfg.replications = 4;
  cfg.master_seed = 42;
  return cfg;
}

TEST(RunReplication, ConstantPotentialGivesItAtEveryLag) {
  const double c = 0.7;
  ExperimentConfig cfg;
  cfg.model = FiniteFkModel({{0.2, 0.8}, {0.5, 0.5}}, {c, c}, {0.5, 0.5});
  cfg.walkers = 3;
  cfg.windows = 200;
  cfg.lags = {0, 1, 7, 30};
  cfg.replications = 1;
  const auto rep = run_replication(cfg, 0);
  for (double e : rep.estimate) EXPECT_NEAR(e, c, 1e-15);
  EXPECT_NEAR(rep.standard_estimate, c, 1e-15);
  for (double se : rep.batch_se) EXPECT_EQ(se, 0.0);
}

TEST(RunReplication, LagZeroEqualsTheStandardEstimator) {
  const auto cfg = two_state_config();
  const auto rep = run_replication(cfg, 1);
  EXPECT_EQ(rep.estimate[0], rep.standard_estimate);
}

TEST(RunReplication, ReplayIsDeterministic) {
  auto cfg = two_state_config();
  cfg.variance_compare = true;
  const auto a = run_replication(cfg, 3);
  const auto b = run_replication(cfg, 3);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(*a.independent, *b.independent);
  EXPECT_EQ(a.trajectory_seed, b.trajectory_seed);
  EXPECT_NE(a.trajectory_seed, a.independent_seed);
  const auto other = run_replication(cfg, 2);
  EXPECT_NE(a.estimate, other.estimate);
}

TEST(RunExperiment, IndependentOfWorkerCount) {
  auto cfg = two_state_config();
  cfg.variance_compare = true;
  cfg.replications = 6;
  cfg.workers = 1;
  const auto serial = run_experiment(cfg);
  cfg.workers = 4;
  const auto parallel = run_experiment(cfg);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].replication_index, i);
    EXPECT_EQ(parallel[i].replication_index, i);
    EXPECT_EQ(serial[i].estimate, parallel[i].estimate);
    EXPECT_EQ(*serial[i].independent, *parallel[i].independent);
  }
}

TEST(RunExperiment, GuidedModelWithExactGuideIsDeterministicForG) {
  ExperimentConfig cfg;
  cfg.model = GuidedHOModel(1.0 / 16.0, 1.0, GuidedKernel::kExactOu, {});
  cfg.walkers = 4;
  cfg.windows = 100;
  cfg.lags = {0, 5, 50};
  cfg.replications = 2;
  for (const auto& rep : run_experiment(cfg)) {
    for (double e : rep.estimate) EXPECT_NEAR(e, std::exp(-1.0 / 32.0), 1e-12);
  }
}

// Guided and plain walks target the same ground state: their large-lag
// estimates must agree with exp(-tau/2) up to Monte Carlo error.
TEST(RunExperiment, GuidedAndPlainOscillatorAgree) {
  ExperimentConfig cfg;
  cfg.walkers = 10;
  cfg.windows = 20000;
  cfg.lags = {20};
  cfg.replications = 8;
  const double target = std::exp(-1.0 / 32.0);
  for (const ModelSpec& model :
       {ModelSpec(HarmonicOscillatorModel{}),
        ModelSpec(GuidedHOModel(1.0 / 16.0, 0.8, GuidedKernel::kExactOu, {}))}) {
    cfg.model = model;
    const auto agg = aggregate(run_experiment(cfg), reference_value(cfg));
    EXPECT_NEAR(agg.reference->value, target, 1e-15);
    EXPECT_LT(agg.lags[0].abs_bias, 5.0 * agg.lags[0].se_mean + 1e-5);
  }
}

TEST(Aggregate, IdenticalReportsHaveZeroVariance) {
  ReplicationReport r;
  r.lags = {0, 4};
  r.estimate = {0.5, 0.6};
  r.independent = std::vector<double>{0.5, 0.6};
  std::vector<ReplicationReport> reports(5, r);
  for (std::size_t i = 0; i < 5; ++i) reports[i].replication_index = i;
  const auto agg = aggregate(reports, Reference{0.6, "test"});
  EXPECT_EQ(agg.lags[0].var_joint, 0.0);
  EXPECT_EQ(agg.lags[1].var_independent, 0.0);
  EXPECT_NEAR(agg.lags[0].abs_bias, 0.1, 1e-15);
  EXPECT_EQ(agg.lags[1].abs_bias, 0.0);
  EXPECT_EQ(agg.lags[0].n_runs, 5u);
}

TEST(Aggregate, RowsSortedByLagAndReportsByIndex) {
  std::vector<ReplicationReport> reports(3);
  for (std::size_t i = 0; i < 3; ++i) {
    reports[i].replication_index = 2 - i;
    reports[i].lags = {9, 2};
    reports[i].estimate = {1.0 + static_cast<double>(i), 0.0};
  }
  const auto agg = aggregate(reports, std::nullopt);
  EXPECT_EQ(agg.lags[0].lag, 2u);
  EXPECT_EQ(agg.lags[1].lag, 9u);
  EXPECT_DOUBLE_EQ(agg.lags[1].mean_estimate, 2.0);
  EXPECT_TRUE(std::isnan(agg.lags[0].abs_bias));
  EXPECT_THROW(aggregate({reports[0]}, std::nullopt), InsufficientData);
  reports[1].lags = {9, 3};
  EXPECT_THROW(aggregate(reports, std::nullopt), InvalidArgument);
}

// Synthetic estimates with bias 0.01 exp(-0.2 l) plus N(0, 1e-4 / R) noise:
// the fitted log|bias| slope recovers -0.2 within 15% on average.
TEST(Aggregate, FitRecoversTheExponentialDecayRate) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> noise(0.0, 1e-4);
  const std::vector<std::size_t> lags{0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  const std::size_t runs = 64;
  double slope_sum = 0.0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    std::vector<ReplicationReport> reports(runs);
    for (std::size_t r = 0; r < runs; ++r) {
      reports[r].replication_index = r;
      reports[r].lags = lags;
      for (std::size_t l : lags) {
        reports[r].estimate.push_back(1.0 + 0.01 * std::exp(-0.2 * static_cast<double>(l)) +
                                      noise(rng));
      }
    }
    const auto agg = aggregate(reports, Reference{1.0, "synthetic"}, lags);
    slope_sum += agg.fit.line.slope;
  }
  EXPECT_NEAR(slope_sum / trials, -0.2, 0.15 * 0.2);
}

TEST(Aggregate, DefaultFitStopsAtTheNoiseFloor) {
  std::vector<LagAggregate> rows(4);
  const double bias[] = {1.0, 0.5, 0.01, 0.4};
  for (std::size_t i = 0; i < 4; ++i) {
    rows[i].lag = i;
    rows[i].abs_bias = bias[i];
    rows[i].se_mean = 0.05;
  }
  EXPECT_EQ(pre_noise_floor_lags(rows), (std::vector<std::size_t>{0, 1}));
}

// Small population: the lag-0 estimate of lambda is visibly biased, the
// lag-10 estimate is not.
TEST(Experiment, LagRemovesSmallPopulationBias) {
  auto cfg = two_state_config();
  cfg.walkers = 2;
  cfg.windows = 20000;
  cfg.lags = {0, 10};
  cfg.replications = 16;
  const auto agg = aggregate(run_experiment(cfg), reference_value(cfg));
  EXPECT_GT(agg.lags[0].abs_bias, 3.0 * agg.lags[0].se_mean);
  EXPECT_LT(agg.lags[1].abs_bias, 3.0 * agg.lags[1].se_mean);
}

TEST(ReferenceValue, Examples) {
  auto cfg = two_state_config();
  EXPECT_NEAR(reference_value(cfg).value, testing::kTwoStateLambda, 1e-12);
  cfg.test_functions = {TestFunctionSpec{"one", {}, {}}};
  EXPECT_EQ(reference_value(cfg).value, 1.0);
  // Stationary law of eta_inf for the two-state model integrates to 1 over both states.
  cfg.test_functions = {TestFunctionSpec{"indicator", {0, 1}, {}}};
  EXPECT_NEAR(reference_value(cfg).value, 1.0, 1e-12);

  ExperimentConfig ho;
  EXPECT_NEAR(reference_value(ho).value, 0.9692332344763441, 1e-15);
  ho.model = HarmonicOscillatorModel(0.125, 1.0, 1.0, {});
  EXPECT_NEAR(reference_value(ho).value, 0.9394130628134758, 1e-15);
  ho.model = GuidedHOModel(1.0, 0.5, GuidedKernel::kEuler, {});
  EXPECT_NEAR(reference_value(ho).value, 0.6065306597126334, 1e-15);
  ho.test_functions = {TestFunctionSpec{"one", {}, {}}, TestFunctionSpec{}};
  ho.estimate_function = 1;
  EXPECT_NO_THROW(reference_value(ho));
}

TEST(Config, ParsesAndRoundTrips) {
  const auto doc = nlohmann::json::parse(R"({
    "model": {"type": "finite", "M": [[0.7, 0.3], [0.4, 0.6]], "G": [1.0, 0.5], "eta0": [0.5, 0.5]},
    "N": 5, "n": 1000, "lags": {"from": 0, "to": 20, "step": 5}, "R": 3,
    "master_seed": 18446744073709551615,
    "test_functions": ["G", "one", {"indicator": [0]}, {"vector": [1.0, -1.0]}],
    "variance_compare": true, "batch_count": 10
  })");
  const auto cfg = config_from_json(doc);
  EXPECT_EQ(cfg.walkers, 5u);
  EXPECT_EQ(cfg.lags, (std::vector<std::size_t>{0, 5, 10, 15, 20}));
  EXPECT_EQ(cfg.master_seed, 18446744073709551615ULL);
  EXPECT_EQ(cfg.test_functions.size(), 4u);
  EXPECT_EQ(cfg.max_lag(), 20u);
  const auto again = config_from_json(config_to_json(cfg));
  EXPECT_EQ(config_to_json(again), config_to_json(cfg));
}

std::string config_error(const std::string& text) {
  try {
    config_from_json(nlohmann::json::parse(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, ErrorsNameTheField) {
  const std::string model = R"("model": {"type": "harmonic_oscillator"})";
  EXPECT_NE(config_error("{" + model + R"(, "N": 0})").find("N"), std::string::npos);
  EXPECT_NE(config_error("{" + model + R"(, "n": -3})").find("n"), std::string::npos);
  EXPECT_NE(config_error("{" + model + R"(, "lags": []})").find("lags"), std::string::npos);
  EXPECT_NE(config_error("{" + model + R"(, "walkers_typo": 3})").find("walkers_typo"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"model": {"type": "harmonic_oscillator", "tau": -1}})"), "");
  EXPECT_NE(config_error(R"({"model": {"type": "finite", "M": [[0.5, 0.6], [0.4, 0.6]],
                                       "G": [1, 1], "eta0": [0.5, 0.5]}})")
                .find("row 0"),
            std::string::npos);
  EXPECT_NE(config_error("{" + model + R"(, "test_functions": [{"indicator": [0]}]})"), "");
  EXPECT_NE(config_error(R"({"N": 3})").find("model"), std::string::npos);
}

}  // namespace
}  // namespace fkdmc
