#pragma once

// N-walker Diffusion Monte Carlo system: multinomial selection followed by
// independent mutation through the model kernel.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fkdmc/error.hpp"
#include "fkdmc/kahan.hpp"
#include "fkdmc/rng.hpp"

namespace fkdmc {

/// Sampling interface of a Feynman-Kac model on an arbitrary state space.
template <class Model>
concept SimulatableFkModel =
    std::copyable<typename Model::state_type> &&
    requires(const Model& model, RngStream& rng, const typename Model::state_type& x) {
      { model.draw_initial(rng) } -> std::same_as<typename Model::state_type>;
      { model.kernel_draw(rng, x) } -> std::same_as<typename Model::state_type>;
      { model.potential(x) } -> std::convertible_to<double>;
      { model.name() } -> std::convertible_to<std::string>;
    };

template <class State>
struct Population {
  std::vector<State> walkers;
  std::size_t step_index = 0;

  std::size_t size() const { return walkers.size(); }
};

template <SimulatableFkModel Model>
Population<typename Model::state_type> init_population(const Model& model,
                                                       std::size_t walkers,
                                                       RngStream& rng) {
  if (walkers == 0) throw InvalidArgument("init_population: N must be >= 1");
  Population<typename Model::state_type> pop;
  pop.walkers.reserve(walkers);
  for (std::size_t i = 0; i < walkers; ++i) pop.walkers.push_back(model.draw_initial(rng));
  return pop;
}

inline void validate_weights(std::span<const double> weights) {
  if (weights.empty()) throw InvalidArgument("selection: empty weight vector");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i]) || weights[i] <= 0.0) {
      throw WeightError("selection: weight of walker " + std::to_string(i) +
                            " is " + std::to_string(weights[i]) +
                            "; weights must be finite and > 0",
                        i);
    }
  }
}

/// N i.i.d. categorical draws with P(i) = w_i / sum(w) (multinomial resampling).
struct MultinomialSelection {
  std::vector<std::size_t> operator()(std::span<const double> weights,
                                      RngStream& rng) const {
    validate_weights(weights);
    const std::size_t n = weights.size();
    std::vector<double> cumulative(n);
    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      running += weights[i];
      cumulative[i] = running;
    }
    std::vector<std::size_t> parents(n);
    for (auto& parent : parents) {
      const double u = rng.uniform() * running;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      parent = std::min(static_cast<std::size_t>(it - cumulative.begin()), n - 1);
    }
    return parents;
  }
};

inline std::vector<std::size_t> selection(std::span<const double> weights,
                                          RngStream& rng) {
  return MultinomialSelection{}(weights, rng);
}

template <SimulatableFkModel Model>
std::vector<typename Model::state_type> mutation(
    const Model& model, std::span<const typename Model::state_type> parents,
    RngStream& rng) {
  std::vector<typename Model::state_type> out;
  out.reserve(parents.size());
  for (const auto& x : parents) out.push_back(model.kernel_draw(rng, x));
  return out;
}

template <SimulatableFkModel Model>
std::vector<double> walker_potentials(const Model& model,
                                      const Population<typename Model::state_type>& pop) {
  std::vector<double> w;
  w.reserve(pop.size());
  for (const auto& x : pop.walkers) w.push_back(static_cast<double>(model.potential(x)));
  return w;
}

/// Selection then mutation, given the potentials already evaluated at the
/// current walkers. `Resampler` defaults to multinomial selection.
template <SimulatableFkModel Model, class Resampler = MultinomialSelection>
Population<typename Model::state_type> step(const Model& model,
                                            const Population<typename Model::state_type>& pop,
                                            std::span<const double> weights,
                                            RngStream& rng,
                                            const Resampler& resample = {}) {
  if (weights.size() != pop.size()) {
    throw InvalidArgument("step: one weight per walker required");
  }
  const auto parents = resample(weights, rng);
  std::vector<typename Model::state_type> selected;
  selected.reserve(pop.size());
  for (std::size_t i : parents) selected.push_back(pop.walkers[i]);
  Population<typename Model::state_type> next;
  next.walkers = mutation(model, std::span<const typename Model::state_type>(selected), rng);
  next.step_index = pop.step_index + 1;
  return next;
}

template <SimulatableFkModel Model, class Resampler = MultinomialSelection>
Population<typename Model::state_type> step(const Model& model,
                                            const Population<typename Model::state_type>& pop,
                                            RngStream& rng,
                                            const Resampler& resample = {}) {
  const auto w = walker_potentials(model, pop);
  return step(model, pop, std::span<const double>(w), rng, resample);
}

/// eta^N(f) = (1/N) sum_i f(xi^i).
template <class State, class Fn>
double empirical_average(const Population<State>& pop, Fn&& f) {
  KahanSum s;
  for (const auto& x : pop.walkers) s += static_cast<double>(f(x));
  return s.value() / static_cast<double>(pop.size());
}

inline double empirical_average(std::span<const double> values) {
  KahanSum s;
  for (double v : values) s += v;
  return s.value() / static_cast<double>(values.size());
}

}  // namespace fkdmc
