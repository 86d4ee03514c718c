#pragma once

// bias.csv, variance.csv, fit.json and meta.json for a replicated experiment.
// CSV floats use 17 significant digits; "nan" marks a missing value.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkdmc/config.hpp"
#include "fkdmc/experiments.hpp"

namespace fkdmc {

inline constexpr const char* kCodeVersion = "0.1.0";

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// JSON number, or null when not finite.
inline nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline void write_bias_csv(std::ostream& os, const AggregateReport& agg) {
  os << "lag,mean_estimate,abs_bias,log_abs_bias,se_mean,n_runs\n";
  for (const auto& row : agg.lags) {
    os << row.lag << ',' << format_double(row.mean_estimate) << ','
       << format_double(row.abs_bias) << ',' << format_double(row.log_abs_bias) << ','
       << format_double(row.se_mean) << ',' << row.n_runs << '\n';
  }
}

inline void write_variance_csv(std::ostream& os, const AggregateReport& agg) {
  os << "lag,var_joint,var_independent,n_runs\n";
  for (const auto& row : agg.lags) {
    os << row.lag << ',' << format_double(row.var_joint) << ','
       << format_double(row.var_independent) << ',' << row.n_runs << '\n';
  }
}

inline nlohmann::json fit_to_json(const AggregateReport& agg) {
  return {{"slope", json_number(agg.fit.line.slope)},
          {"intercept", json_number(agg.fit.line.intercept)},
          {"slope_se", json_number(agg.fit.line.slope_se)},
          {"r2", json_number(agg.fit.line.r2)},
          {"fit_lags", agg.fit.fit_lags},
          {"rule", agg.fit.rule}};
}

inline nlohmann::json meta_to_json(const ExperimentConfig& cfg, const AggregateReport& agg,
                                   const std::vector<ReplicationReport>& reports,
                                   double wall_seconds) {
  nlohmann::json seeds = nlohmann::json::array();
  nlohmann::json runtimes = nlohmann::json::array();
  for (const auto& r : reports) {
    seeds.push_back({{"replication_index", r.replication_index},
                     {"trajectory_seed", r.trajectory_seed},
                     {"independent_seed", r.independent_seed}});
    runtimes.push_back(r.runtime_seconds);
  }
  nlohmann::json reference = nullptr;
  if (agg.reference) {
    reference = {{"value", agg.reference->value}, {"provenance", agg.reference->provenance}};
  }
  auto config = config_to_json(cfg);
  config.erase("workers");
  config.erase("output_dir");
  return {{"code_version", kCodeVersion},
          {"config", config},
          {"test_function_estimated", cfg.test_functions[cfg.estimate_function].label()},
          {"seed_derivation", "splitmix64(splitmix64(splitmix64(master_seed) ^ index) ^ role)"},
          {"replications", seeds},
          {"reference", reference},
          {"runtime",
           {{"wall_seconds", wall_seconds},
            {"workers", cfg.workers},
            {"replication_seconds", runtimes}}}};
}

/// Writes the four experiment files into `dir` and returns their paths. If
/// any write fails, files already written are removed before rethrowing.
inline std::vector<std::filesystem::path> write_experiment_outputs(
    const std::filesystem::path& dir, const ExperimentConfig& cfg, const AggregateReport& agg,
    const std::vector<ReplicationReport>& reports, double wall_seconds) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, auto&& body) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    written.push_back(path);
    body(out);
    out.flush();
    if (!out) throw Error("failed writing '" + path.string() + "'");
  };
  try {
    emit("bias.csv", [&](std::ostream& os) { write_bias_csv(os, agg); });
    emit("variance.csv", [&](std::ostream& os) { write_variance_csv(os, agg); });
    emit("fit.json", [&](std::ostream& os) { os << fit_to_json(agg).dump(2) << '\n'; });
    emit("meta.json", [&](std::ostream& os) {
      os << meta_to_json(cfg, agg, reports, wall_seconds).dump(2) << '\n';
    });
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) std::filesystem::remove(p, ec);
    throw;
  }
  return written;
}

}  // namespace fkdmc
