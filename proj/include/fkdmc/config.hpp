#pragma once

// Strict JSON experiment configuration. Unknown keys are rejected so that a
// typo cannot silently fall back to a default.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fkdmc/error.hpp"
#include "fkdmc/fk_core.hpp"
#include "fkdmc/models.hpp"

namespace fkdmc {

using ModelSpec = std::variant<HarmonicOscillatorModel, GuidedHOModel, FiniteFkModel>;

/// Test function phi. `kind` is "G", "one", "indicator" (on a set of finite
/// states) or "vector" (explicit values on finite states).
struct TestFunctionSpec {
  std::string kind = "G";
  std::vector<std::size_t> states;
  std::vector<double> values;

  std::string label() const {
    if (kind == "indicator") {
      std::string s = "indicator{";
      for (std::size_t i = 0; i < states.size(); ++i) s += (i ? "," : "") + std::to_string(states[i]);
      return s + "}";
    }
    return kind;
  }
};

struct ExperimentConfig {
  ModelSpec model = HarmonicOscillatorModel{};
  std::size_t walkers = 10;    // N
  std::size_t windows = 1000;  // n
  std::vector<std::size_t> lags{0};
  std::size_t replications = 2;  // R
  std::uint64_t master_seed = 1;
  std::vector<TestFunctionSpec> test_functions{TestFunctionSpec{}};
  std::size_t estimate_function = 0;  // index of the function compared with the reference
  std::string output_dir = "out";
  bool variance_compare = false;
  std::size_t workers = 1;
  std::size_t burn_in = 0;
  std::optional<std::size_t> batch_count;
  std::optional<std::vector<std::size_t>> fit_lags;

  std::size_t max_lag() const { return *std::max_element(lags.begin(), lags.end()); }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline double get_number(const nlohmann::json& obj, const char* key, double fallback,
                         const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline std::size_t get_count(const nlohmann::json& obj, const char* key, std::size_t fallback,
                             const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline std::vector<std::size_t> get_count_list(const nlohmann::json& v, const std::string& where) {
  if (v.is_object()) {
    reject_unknown(v, {"from", "to", "step"}, where);
    const std::size_t from = get_count(v, "from", 0, where);
    const std::size_t to = get_count(v, "to", from, where);
    const std::size_t step = get_count(v, "step", 1, where);
    if (step == 0) throw ConfigError(where + ".step: must be >= 1");
    if (to < from) throw ConfigError(where + ": 'to' must not be below 'from'");
    std::vector<std::size_t> out;
    for (std::size_t x = from; x <= to; x += step) out.push_back(x);
    return out;
  }
  if (!v.is_array()) throw ConfigError(where + ": expected an array or {from,to,step}");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer() || v[i].get<std::int64_t>() < 0) {
      throw ConfigError(where + "[" + std::to_string(i) + "]: expected a non-negative integer");
    }
    out.push_back(v[i].get<std::size_t>());
  }
  return out;
}

inline GaussianLaw parse_initial(const nlohmann::json& model, const std::string& where) {
  GaussianLaw law;
  law.mean = get_number(model, "initial_mean", 0.0, where);
  law.variance = get_number(model, "initial_variance", 1.0, where);
  if (!(law.variance >= 0.0)) throw ConfigError(where + ".initial_variance: must be >= 0");
  return law;
}

}  // namespace detail

inline ModelSpec model_from_json(const nlohmann::json& m) {
  const std::string where = "model";
  if (!m.is_object() || !m.contains("type") || !m.at("type").is_string()) {
    throw ConfigError("model: expected an object with a string 'type'");
  }
  const auto type = m.at("type").get<std::string>();
  if (type == "harmonic_oscillator") {
    detail::reject_unknown(m, {"type", "tau", "omega", "mass", "initial_mean", "initial_variance"},
                           where);
    return HarmonicOscillatorModel(detail::get_number(m, "tau", 1.0 / 16.0, where),
                                   detail::get_number(m, "omega", 1.0, where),
                                   detail::get_number(m, "mass", 1.0, where),
                                   detail::parse_initial(m, where));
  }
  if (type == "guided_ho") {
    detail::reject_unknown(m, {"type", "tau", "alpha", "kernel", "initial_mean", "initial_variance"},
                           where);
    GuidedKernel kernel = GuidedKernel::kExactOu;
    if (m.contains("kernel")) {
      const auto& k = m.at("kernel");
      if (k == "exact-ou") {
        kernel = GuidedKernel::kExactOu;
      } else if (k == "euler") {
        kernel = GuidedKernel::kEuler;
      } else {
        throw ConfigError("model.kernel: expected \"exact-ou\" or \"euler\"");
      }
    }
    return GuidedHOModel(detail::get_number(m, "tau", 1.0 / 16.0, where),
                         detail::get_number(m, "alpha", 1.0, where), kernel,
                         detail::parse_initial(m, where));
  }
  if (type == "finite") return finite_model_from_json(m);
  throw ConfigError("model.type: unknown model '" + type + "'");
}

inline nlohmann::json model_to_json(const ModelSpec& spec) {
  return std::visit(
      [](const auto& m) -> nlohmann::json {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, HarmonicOscillatorModel>) {
          return {{"type", "harmonic_oscillator"}, {"tau", m.tau()},
                  {"omega", m.omega()},            {"mass", m.mass()},
                  {"initial_mean", m.initial().mean}, {"initial_variance", m.initial().variance}};
        } else if constexpr (std::is_same_v<M, GuidedHOModel>) {
          return {{"type", "guided_ho"},
                  {"tau", m.tau()},
                  {"alpha", m.alpha()},
                  {"kernel", m.kernel_mode() == GuidedKernel::kExactOu ? "exact-ou" : "euler"},
                  {"initial_mean", m.initial().mean},
                  {"initial_variance", m.initial().variance}};
        } else {
          return to_json(m);
        }
      },
      spec);
}

inline TestFunctionSpec test_function_from_json(const nlohmann::json& v, std::size_t index) {
  const std::string where = "test_functions[" + std::to_string(index) + "]";
  TestFunctionSpec spec;
  if (v.is_string()) {
    spec.kind = v.get<std::string>();
    if (spec.kind != "G" && spec.kind != "one") {
      throw ConfigError(where + ": unknown test function '" + spec.kind + "'");
    }
    return spec;
  }
  if (!v.is_object() || v.size() != 1) {
    throw ConfigError(where + ": expected \"G\", \"one\", {\"indicator\": [...]} or {\"vector\": [...]}");
  }
  if (v.contains("indicator")) {
    spec.kind = "indicator";
    spec.states = detail::get_count_list(v.at("indicator"), where + ".indicator");
    return spec;
  }
  if (v.contains("vector")) {
    spec.kind = "vector";
    const auto& arr = v.at("vector");
    if (!arr.is_array()) throw ConfigError(where + ".vector: expected an array");
    for (const auto& x : arr) {
      if (!x.is_number()) throw ConfigError(where + ".vector: entries must be numbers");
      spec.values.push_back(x.get<double>());
    }
    return spec;
  }
  throw ConfigError(where + ": unknown key '" + v.begin().key() + "'");
}

inline nlohmann::json test_function_to_json(const TestFunctionSpec& spec) {
  if (spec.kind == "indicator") return {{"indicator", spec.states}};
  if (spec.kind == "vector") return {{"vector", spec.values}};
  return spec.kind;
}

/// Cross-field validation shared by the parser and programmatic configs.
inline void validate(const ExperimentConfig& cfg) {
  if (cfg.walkers < 1) throw ConfigError("N: must be >= 1");
  if (cfg.windows < 1) throw ConfigError("n: must be >= 1");
  if (cfg.lags.empty()) throw ConfigError("lags: must be non-empty");
  if (cfg.replications < 1) throw ConfigError("R: must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers: must be >= 1");
  if (cfg.test_functions.empty()) throw ConfigError("test_functions: must be non-empty");
  if (cfg.estimate_function >= cfg.test_functions.size()) {
    throw ConfigError("estimate_function: index out of range");
  }
  if (cfg.batch_count && *cfg.batch_count < 2) throw ConfigError("batch_count: must be >= 2");
  const bool finite = std::holds_alternative<FiniteFkModel>(cfg.model);
  for (std::size_t i = 0; i < cfg.test_functions.size(); ++i) {
    const auto& tf = cfg.test_functions[i];
    const std::string where = "test_functions[" + std::to_string(i) + "]";
    if (tf.kind == "indicator" || tf.kind == "vector") {
      if (!finite) throw ConfigError(where + ": '" + tf.kind + "' needs a finite model");
      const std::size_t d = std::get<FiniteFkModel>(cfg.model).size();
      if (tf.kind == "vector" && tf.values.size() != d) {
        throw ConfigError(where + ".vector: expected " + std::to_string(d) + " entries");
      }
      for (std::size_t s : tf.states) {
        if (s >= d) throw ConfigError(where + ".indicator: state " + std::to_string(s) + " out of range");
      }
    }
  }
  if (cfg.fit_lags) {
    for (std::size_t l : *cfg.fit_lags) {
      if (std::find(cfg.lags.begin(), cfg.lags.end(), l) == cfg.lags.end()) {
        throw ConfigError("fit_lags: lag " + std::to_string(l) + " is not in lags");
      }
    }
  }
}

inline ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  detail::reject_unknown(doc,
                         {"model", "N", "n", "lags", "R", "master_seed", "test_functions",
                          "estimate_function", "output_dir", "variance_compare", "workers",
                          "burn_in", "batch_count", "fit_lags"},
                         "config");
  ExperimentConfig cfg;
  if (!doc.contains("model")) throw ConfigError("model: missing");
  cfg.model = model_from_json(doc.at("model"));
  cfg.walkers = detail::get_count(doc, "N", cfg.walkers, "config");
  cfg.windows = detail::get_count(doc, "n", cfg.windows, "config");
  if (doc.contains("lags")) cfg.lags = detail::get_count_list(doc.at("lags"), "lags");
  cfg.replications = detail::get_count(doc, "R", cfg.replications, "config");
  if (doc.contains("master_seed")) {
    const auto& s = doc.at("master_seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      throw ConfigError("master_seed: expected an unsigned 64-bit integer");
    }
    cfg.master_seed = s.get<std::uint64_t>();
  }
  if (doc.contains("test_functions")) {
    const auto& arr = doc.at("test_functions");
    if (!arr.is_array()) throw ConfigError("test_functions: expected an array");
    cfg.test_functions.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      cfg.test_functions.push_back(test_function_from_json(arr[i], i));
    }
  }
  cfg.estimate_function = detail::get_count(doc, "estimate_function", 0, "config");
  if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string()) throw ConfigError("output_dir: expected a string");
    cfg.output_dir = doc.at("output_dir").get<std::string>();
  }
  if (doc.contains("variance_compare")) {
    if (!doc.at("variance_compare").is_boolean()) {
      throw ConfigError("variance_compare: expected a boolean");
    }
    cfg.variance_compare = doc.at("variance_compare").get<bool>();
  }
  cfg.workers = detail::get_count(doc, "workers", cfg.workers, "config");
  cfg.burn_in = detail::get_count(doc, "burn_in", 0, "config");
  if (doc.contains("batch_count") && !doc.at("batch_count").is_null()) {
    cfg.batch_count = detail::get_count(doc, "batch_count", 0, "config");
  }
  if (doc.contains("fit_lags") && !doc.at("fit_lags").is_null()) {
    cfg.fit_lags = detail::get_count_list(doc.at("fit_lags"), "fit_lags");
  }
  validate(cfg);
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json tfs = nlohmann::json::array();
  for (const auto& tf : cfg.test_functions) tfs.push_back(test_function_to_json(tf));
  nlohmann::json doc = {{"model", model_to_json(cfg.model)},
                        {"N", cfg.walkers},
                        {"n", cfg.windows},
                        {"lags", cfg.lags},
                        {"R", cfg.replications},
                        {"master_seed", cfg.master_seed},
                        {"test_functions", tfs},
                        {"estimate_function", cfg.estimate_function},
                        {"output_dir", cfg.output_dir},
                        {"variance_compare", cfg.variance_compare},
                        {"workers", cfg.workers},
                        {"burn_in", cfg.burn_in},
                        {"batch_count", nullptr},
                        {"fit_lags", nullptr}};
  if (cfg.batch_count) doc["batch_count"] = *cfg.batch_count;
  if (cfg.fit_lags) doc["fit_lags"] = *cfg.fit_lags;
  return doc;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  return config_from_json(doc);
}

}  // namespace fkdmc
