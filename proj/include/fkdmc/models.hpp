#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fkdmc/error.hpp"
#include "fkdmc/fk_core.hpp"
#include "fkdmc/rng.hpp"

namespace fkdmc {

/// Gaussian initial law shared by the continuous models.
struct GaussianLaw {
  double mean = 0.0;
  double variance = 1.0;
};

/*!
  Plain harmonic-oscillator Feynman-Kac model for
  H = -(1/2m) d^2/dx^2 + m omega^2 x^2 / 2.

  Kernel: Brownian motion over time tau (variance tau / m).
  Potential: G(x) = exp(-tau m omega^2 x^2 / 2), always in (0, 1].
  The dominant eigenvalue of Q is approximately exp(-tau omega / 2).
*/
class HarmonicOscillatorModel {
 public:
  using state_type = double;

  explicit HarmonicOscillatorModel(double tau = 1.0 / 16.0, double omega = 1.0,
                                   double mass = 1.0, GaussianLaw initial = {})
      : tau_(tau), omega_(omega), mass_(mass), initial_(initial) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      throw ConfigError("harmonic oscillator: tau must be finite and > 0");
    }
    if (!(omega > 0.0) || !std::isfinite(omega)) {
      throw ConfigError("harmonic oscillator: omega must be finite and > 0");
    }
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw ConfigError("harmonic oscillator: mass must be finite and > 0");
    }
    if (!(initial.variance >= 0.0) || !std::isfinite(initial.mean)) {
      throw ConfigError("harmonic oscillator: invalid initial law");
    }
    step_sd_ = std::sqrt(tau_ / mass_);
    curvature_ = tau_ * mass_ * omega_ * omega_ / 2.0;
  }

  double tau() const { return tau_; }
  double omega() const { return omega_; }
  double mass() const { return mass_; }
  const GaussianLaw& initial() const { return initial_; }
  std::string name() const { return "harmonic_oscillator"; }

  double draw_initial(RngStream& rng) const {
    return initial_.mean + std::sqrt(initial_.variance) * rng.normal();
  }

  double kernel_draw(RngStream& rng, double x) const { return x + step_sd_ * rng.normal(); }

  double potential(double x) const { return std::exp(-curvature_ * x * x); }

  /// exp(-tau E0) with E0 = omega / 2.
  double reference_lambda() const { return std::exp(-tau_ * omega_ / 2.0); }

 private:
  double tau_;
  double omega_;
  double mass_;
  GaussianLaw initial_;
  double step_sd_ = 0.0;
  double curvature_ = 0.0;
};

enum class GuidedKernel { kExactOu, kEuler };

/*!
  Importance-sampled harmonic oscillator (m = omega = 1) with guiding
  function psi(x) = exp(-alpha x^2 / 2).

  The walkers follow the drifted diffusion dX = b(X) dt + dW with
  b = psi'/psi = -alpha x, and are weighted by G = exp(-tau E_L) where
  E_L = H psi / psi = alpha / 2 + (1 - alpha^2) x^2 / 2.
  At alpha = 1 the guiding function is the ground state and G is constant.
*/
class GuidedHOModel {
 public:
  using state_type = double;

  explicit GuidedHOModel(double tau = 1.0 / 16.0, double alpha = 1.0,
                         GuidedKernel kernel = GuidedKernel::kExactOu,
                         GaussianLaw initial = {})
      : tau_(tau), alpha_(alpha), kernel_(kernel), initial_(initial) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      throw ConfigError("guided oscillator: tau must be finite and > 0");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw ConfigError("guided oscillator: alpha must be finite and > 0");
    }
    if (!(initial.variance >= 0.0) || !std::isfinite(initial.mean)) {
      throw ConfigError("guided oscillator: invalid initial law");
    }
    if (kernel_ == GuidedKernel::kExactOu) {
      decay_ = std::exp(-alpha_ * tau_);
      step_sd_ = std::sqrt(ou_variance());
    } else {
      decay_ = 1.0 - alpha_ * tau_;
      step_sd_ = std::sqrt(tau_);
    }
  }

  double tau() const { return tau_; }
  double alpha() const { return alpha_; }
  GuidedKernel kernel_mode() const { return kernel_; }
  const GaussianLaw& initial() const { return initial_; }
  std::string name() const { return "guided_ho"; }

  /// Mean factor of the one-step transition: x' = decay * x + noise.
  double decay() const { return decay_; }
  double step_variance() const { return step_sd_ * step_sd_; }

  /// (1 - exp(-2 alpha tau)) / (2 alpha), exact OU variance over time tau.
  double ou_variance() const { return -std::expm1(-2.0 * alpha_ * tau_) / (2.0 * alpha_); }

  double local_energy(double x) const {
    return alpha_ / 2.0 + (1.0 - alpha_ * alpha_) * x * x / 2.0;
  }

  double draw_initial(RngStream& rng) const {
    return initial_.mean + std::sqrt(initial_.variance) * rng.normal();
  }

  double kernel_draw(RngStream& rng, double x) const {
    return decay_ * x + step_sd_ * rng.normal();
  }

  double potential(double x) const { return std::exp(-tau_ * local_energy(x)); }

  /// Importance sampling is a similarity transform of Q: same eigenvalue
  /// as the plain oscillator, exp(-tau / 2).
  double reference_lambda() const { return std::exp(-tau_ / 2.0); }

 private:
  double tau_;
  double alpha_;
  GuidedKernel kernel_;
  GaussianLaw initial_;
  double decay_ = 1.0;
  double step_sd_ = 0.0;
};

/// Exposes a FiniteFkModel to the particle engine; states are indices.
class FiniteAdapter {
 public:
  using state_type = std::size_t;

  explicit FiniteAdapter(FiniteFkModel model) : model_(std::move(model)) {
    const std::size_t d = model_.size();
    cumulative_rows_.resize(d);
    for (std::size_t x = 0; x < d; ++x) cumulative_rows_[x] = cumulative(model_.kernel()[x]);
    cumulative_initial_ = cumulative(model_.eta0());
  }

  const FiniteFkModel& model() const { return model_; }
  std::string name() const { return "finite"; }

  std::size_t draw_initial(RngStream& rng) const { return sample(cumulative_initial_, rng); }

  std::size_t kernel_draw(RngStream& rng, std::size_t x) const {
    return sample(cumulative_rows_[x], rng);
  }

  double potential(std::size_t x) const { return model_.potential(x); }

 private:
  static std::vector<double> cumulative(const std::vector<double>& probs) {
    std::vector<double> c(probs.size());
    double running = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      running += probs[i];
      c[i] = running;
    }
    return c;
  }

  // Zero-probability states are never returned: upper_bound skips flat steps.
  static std::size_t sample(const std::vector<double>& cumulative, RngStream& rng) {
    const double u = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cumulative.begin());
    if (i >= cumulative.size()) i = cumulative.size() - 1;
    return i;
  }

  FiniteFkModel model_;
  std::vector<std::vector<double>> cumulative_rows_;
  std::vector<double> cumulative_initial_;
};

inline FiniteAdapter finite_adapter(FiniteFkModel model) {
  return FiniteAdapter(std::move(model));
}

}  // namespace fkdmc
