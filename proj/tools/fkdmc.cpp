#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fkdmc/cli.hpp"

int main(int argc, char** argv) {
  using namespace fkdmc;

  CLI::App app{"Fixed-lag Feynman-Kac estimators on a Diffusion Monte Carlo engine"};
  app.require_subcommand(1);

  std::string config_path;
  cli::Overrides overrides;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t workers = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment configuration")->required();
    sub->add_option("--seed", seed, "override master_seed");
    sub->add_option("--out", out_dir, "override output_dir");
    sub->add_option("--workers", workers, "override worker thread count")
        ->check(CLI::PositiveNumber);
  };

  auto* bias = app.add_subcommand("bias-sweep", "replicated lag sweep: bias, variance, fit");
  auto* variance = app.add_subcommand("variance-compare",
                                      "bias-sweep with the independent-denominator estimator");
  auto* oracle = app.add_subcommand("oracle-check", "semigroup identities of a finite model");
  auto* unbiased = app.add_subcommand("unbiasedness-check",
                                      "exact vs simulated expectation of gamma^N_n(1)");
  for (auto* sub : {bias, variance, oracle, unbiased}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kConfigError;
  }

  for (auto* sub : {bias, variance, oracle, unbiased}) {
    if (sub->count("--seed")) overrides.seed = seed;
    if (sub->count("--out")) overrides.out = out_dir;
    if (sub->count("--workers")) overrides.workers = workers;
  }

  ExperimentConfig cfg;
  const int loaded = cli::guarded(std::cerr, [&] {
    cfg = load_config(config_path);
    cli::apply(overrides, cfg);
    return static_cast<int>(cli::kSuccess);
  });
  if (loaded != cli::kSuccess) return loaded;

  if (bias->parsed()) return cli::cmd_bias_sweep(cfg, std::cout, std::cerr);
  if (variance->parsed()) return cli::cmd_variance_compare(cfg, std::cout, std::cerr);
  if (oracle->parsed()) return cli::cmd_oracle_check(cfg, std::cout, std::cerr);
  return cli::cmd_unbiasedness_check(cfg, std::cout, std::cerr);
}
