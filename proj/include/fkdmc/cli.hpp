#pragma once

// Subcommand bodies for the fkdmc command-line tool. Each returns the process
// exit code: 0 success, 1 check failure or runtime error, 2 configuration error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <variant>

#include "fkdmc/checks.hpp"
#include "fkdmc/config.hpp"
#include "fkdmc/experiments.hpp"
#include "fkdmc/output.hpp"

namespace fkdmc::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kConfigError = 2 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
};

inline void apply(const Overrides& o, ExperimentConfig& cfg) {
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.workers) cfg.workers = *o.workers;
  validate(cfg);
}

template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
}

inline const FiniteFkModel& require_finite(const ExperimentConfig& cfg, const char* command) {
  if (const auto* m = std::get_if<FiniteFkModel>(&cfg.model)) return *m;
  throw ConfigError(std::string(command) + " requires a model of type \"finite\"");
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
}

/// Replicated run over all configured lags; writes bias.csv, variance.csv,
/// fit.json and meta.json into cfg.output_dir.
inline int cmd_bias_sweep(ExperimentConfig cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    validate(cfg);
    if (cfg.replications < 2) throw ConfigError("R: bias-sweep needs at least 2 replications");
    std::optional<Reference> reference;
    try {
      reference = reference_value(cfg);
    } catch (const NoReference& e) {
      err << "note: " << e.what() << "; bias columns left empty\n";
    }
    const auto start = std::chrono::steady_clock::now();
    const auto reports = run_experiment(cfg);
    const auto agg = aggregate(reports, reference, cfg.fit_lags);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_experiment_outputs(cfg.output_dir, cfg, agg, reports, wall);

    char line[160];
    if (reference) {
      out << "reference " << format_double(reference->value) << " (" << reference->provenance
          << ")\n";
    }
    out << "  lag      mean_estimate           abs_bias            se_mean          var_joint"
        << (cfg.variance_compare ? "    var_independent" : "") << '\n';
    for (const auto& row : agg.lags) {
      std::snprintf(line, sizeof line, "%5zu %18.12f %18.6e %18.6e %18.6e", row.lag,
                    row.mean_estimate, row.abs_bias, row.se_mean, row.var_joint);
      out << line;
      if (cfg.variance_compare) {
        std::snprintf(line, sizeof line, " %18.6e", row.var_independent);
        out << line;
      }
      out << '\n';
    }
    if (reference) {
      out << "log|bias| slope " << format_double(agg.fit.line.slope) << " +/- "
          << format_double(agg.fit.line.slope_se) << " over " << agg.fit.fit_lags.size()
          << " lags\n";
    }
    out << "wrote " << cfg.output_dir << " in " << wall << " s\n";
    return static_cast<int>(kSuccess);
  });
}

inline int cmd_variance_compare(ExperimentConfig cfg, std::ostream& out, std::ostream& err) {
  cfg.variance_compare = true;
  return cmd_bias_sweep(std::move(cfg), out, err);
}

/// Semigroup and eigen identities of a finite model; writes oracle.json.
inline int cmd_oracle_check(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto& model = require_finite(cfg, "oracle-check");
    const auto rep = oracle_check(model);
    auto vec = [](const std::vector<double>& v) {
      std::string s = "(";
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
      return s + ")";
    };
    out << "lambda   " << format_double(rep.eigen.lambda) << '\n'
        << "h        " << vec(rep.eigen.h) << '\n'
        << "eta_inf  " << vec(rep.eigen.eta_inf) << '\n'
        << "residual " << format_double(rep.eigen.residual) << " after " << rep.eigen.iterations
        << " sweeps\n";
    for (const auto& c : rep.identities) {
      char line[200];
      std::snprintf(line, sizeof line, "[%s] %-55s error %.3e (tol %.1e)\n",
                    c.pass() ? "PASS" : "FAIL", c.name.c_str(), c.error, c.tolerance);
      out << line;
    }
    write_json_file(std::filesystem::path(cfg.output_dir) / "oracle.json", to_json(rep));
    if (const auto* bad = rep.first_failure()) {
      err << "identity failed: " << bad->name << '\n';
      return static_cast<int>(kCheckFailed);
    }
    return static_cast<int>(kSuccess);
  });
}

/// E[gamma^N_n(1)]: enumeration vs exact flow vs R engine runs.
inline int cmd_unbiasedness_check(const ExperimentConfig& cfg, std::ostream& out,
                                  std::ostream& err) {
  return guarded(err, [&] {
    const auto& model = require_finite(cfg, "unbiasedness-check");
    if (cfg.replications < 2) throw ConfigError("R: unbiasedness-check needs at least 2 runs");
    const auto rep =
        unbiasedness_check(model, cfg.walkers, cfg.windows, cfg.replications, cfg.master_seed);
    out << "N=" << rep.walkers << " n=" << rep.steps << " runs=" << rep.runs << '\n'
        << "enumerated E[gamma^N_n(1)] " << format_double(rep.exact) << '\n'
        << "exact gamma_n(1)           " << format_double(rep.oracle) << "  |diff| "
        << format_double(rep.exact_error()) << (rep.exact_pass() ? "  PASS" : "  FAIL") << '\n'
        << "engine mean                " << format_double(rep.mc_mean) << " +/- "
        << format_double(rep.mc_se) << "  z " << format_double(rep.z_score())
        << (rep.mc_pass() ? "  PASS" : "  FAIL") << '\n';
    write_json_file(std::filesystem::path(cfg.output_dir) / "unbiasedness.json", to_json(rep));
    return static_cast<int>(rep.pass() ? kSuccess : kCheckFailed);
  });
}

}  // namespace fkdmc::cli
