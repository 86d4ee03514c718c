#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "fkdmc/cli.hpp"
#include "test_support.hpp"

namespace fkdmc {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fkdmc_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_binary(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string("\"") + FKDMC_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& name, const nlohmann::json& doc) {
  const auto path = dir / name;
  std::ofstream(path) << doc.dump(2);
  return path;
}

nlohmann::json two_state_json() {
  return nlohmann::json::parse(R"({
    "model": {"type": "finite", "M": [[0.7, 0.3], [0.4, 0.6]], "G": [1.0, 0.5], "eta0": [0.5, 0.5]},
    "N": 2, "n": 2, "R": 20000, "master_seed": 9
  })");
}

ExperimentConfig smoke_config() {
  return load_config(fs::path(FKDMC_SOURCE_DIR) / "configs" / "smoke.json");
}

TEST(Cli, ZeroWalkersIsAConfigErrorNamingTheField) {
  const auto dir = scratch("zero_walkers");
  auto doc = two_state_json();
  doc["N"] = 0;
  const auto cfg = write_config(dir, "bad.json", doc);
  EXPECT_EQ(run_binary("bias-sweep --config \"" + cfg.string() + "\"", dir / "log.txt"), 2);
  EXPECT_NE(slurp(dir / "log.txt").find("N: must be >= 1"), std::string::npos);
}

TEST(Cli, BrokenRowSumIsAConfigError) {
  const auto dir = scratch("row_sum");
  auto doc = two_state_json();
  doc["model"]["M"] = {{0.7, 0.4}, {0.4, 0.6}};
  const auto cfg = write_config(dir, "bad.json", doc);
  EXPECT_EQ(run_binary("oracle-check --config \"" + cfg.string() + "\"", dir / "log.txt"), 2);
  EXPECT_NE(slurp(dir / "log.txt").find("row 0"), std::string::npos);
}

TEST(Cli, MissingConfigAndUnknownSubcommand) {
  const auto dir = scratch("missing");
  EXPECT_EQ(run_binary("bias-sweep --config /nonexistent/x.json", dir / "log.txt"), 2);
  EXPECT_EQ(run_binary("frobnicate", dir / "log.txt"), 2);
  EXPECT_EQ(run_binary("bias-sweep", dir / "log.txt"), 2);
}

TEST(Cli, OracleCheckPrintsLambdaAndPasses) {
  const auto dir = scratch("oracle");
  auto doc = two_state_json();
  doc["output_dir"] = dir.string();
  const auto cfg = write_config(dir, "cfg.json", doc);
  EXPECT_EQ(run_binary("oracle-check --config \"" + cfg.string() + "\"", dir / "log.txt"), 0);
  EXPECT_NE(slurp(dir / "log.txt").find("lambda   0.8162277660168"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir / "oracle.json"));
  EXPECT_TRUE(report.at("pass").get<bool>());
  EXPECT_NEAR(report.at("lambda").get<double>(), testing::kTwoStateLambda, 1e-12);
}

TEST(Cli, OracleCheckNeedsAFiniteModel) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_oracle_check(smoke_config(), out, err), cli::kConfigError);
}

TEST(Cli, UnbiasednessCheckPasses) {
  const auto dir = scratch("unbiased");
  auto cfg = config_from_json(two_state_json());
  cfg.output_dir = dir.string();
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_unbiasedness_check(cfg, out, err), cli::kSuccess) << out.str() << err.str();
  const auto report = nlohmann::json::parse(slurp(dir / "unbiasedness.json"));
  EXPECT_NEAR(report.at("exact_expectation").get<double>(), 0.6, 1e-12);
  EXPECT_TRUE(report.at("pass").get<bool>());
}

// Negative control: always keeping the heaviest walker is not an unbiased
// selection, and the check must catch it.
struct KeepHeaviest {
  std::vector<std::size_t> operator()(std::span<const double> weights, RngStream&) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < weights.size(); ++i) {
      if (weights[i] > weights[best]) best = i;
    }
    return std::vector<std::size_t>(weights.size(), best);
  }
};

TEST(Cli, UnbiasednessCheckCatchesABrokenResampler) {
  const auto model = testing::two_state_model();
  const auto good = unbiasedness_check(model, 2, 2, 20000, 9);
  const auto bad = unbiasedness_check(model, 2, 2, 20000, 9, KeepHeaviest{});
  EXPECT_TRUE(good.pass());
  EXPECT_FALSE(bad.mc_pass());
  EXPECT_TRUE(bad.exact_pass());
}

TEST(Cli, SmokeBiasSweepWritesAllOutputsQuickly) {
  const auto dir = scratch("smoke");
  auto cfg = smoke_config();
  cfg.output_dir = dir.string();
  std::ostringstream out, err;
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(cli::cmd_bias_sweep(cfg, out, err), cli::kSuccess) << err.str();
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
  for (const char* f : {"bias.csv", "variance.csv", "fit.json", "meta.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(slurp(dir / "bias.csv").rfind("lag,mean_estimate,abs_bias,log_abs_bias,se_mean,n_runs\n", 0), 0u);
  const auto meta = nlohmann::json::parse(slurp(dir / "meta.json"));
  EXPECT_EQ(meta.at("replications").size(), cfg.replications);
  EXPECT_NEAR(meta.at("reference").at("value").get<double>(), 0.9692332344763441, 1e-15);
  EXPECT_FALSE(meta.at("config").contains("workers"));
}

TEST(Cli, BiasSweepNeedsTwoReplications) {
  auto cfg = smoke_config();
  cfg.replications = 1;
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_bias_sweep(cfg, out, err), cli::kConfigError);
}

TEST(Cli, OutputsAreByteIdenticalAcrossRunsAndWorkerCounts) {
  const auto dir = scratch("determinism");
  const auto cfg = fs::path(FKDMC_SOURCE_DIR) / "configs" / "smoke.json";
  for (const char* run : {"a", "b", "c"}) {
    const std::string workers = std::string(run) == "c" ? "3" : "1";
    ASSERT_EQ(run_binary("variance-compare --config \"" + cfg.string() + "\" --out \"" +
                             (dir / run).string() + "\" --workers " + workers + " --seed 123",
                         dir / "log.txt"),
              0)
        << slurp(dir / "log.txt");
  }
  for (const char* f : {"bias.csv", "variance.csv", "fit.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "c" / f)) << f;
  }
  const auto meta = nlohmann::json::parse(slurp(dir / "a" / "meta.json"));
  EXPECT_EQ(meta.at("config").at("master_seed").get<std::uint64_t>(), 123u);
}

}  // namespace
}  // namespace fkdmc
