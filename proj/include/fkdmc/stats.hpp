#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>

#include "fkdmc/error.hpp"
#include "fkdmc/kahan.hpp"

namespace fkdmc::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw InsufficientData("mean of an empty sample");
  KahanSum s;
  for (double x : xs) s += x;
  return s.value() / static_cast<double>(xs.size());
}

/// Unbiased sample variance (divisor n - 1).
inline double variance(std::span<const double> xs) {
  if (xs.size() < 2) throw InsufficientData("variance needs at least two values");
  const double m = mean(xs);
  KahanSum s;
  for (double x : xs) s += (x - m) * (x - m);
  return s.value() / static_cast<double>(xs.size() - 1);
}

/// Sample skewness and (non-excess) kurtosis using biased moments.
struct Shape {
  double skewness = 0.0;
  double kurtosis = 3.0;
};

inline Shape shape(std::span<const double> xs) {
  const double m = mean(xs);
  KahanSum m2, m3, m4;
  for (double x : xs) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double n = static_cast<double>(xs.size());
  const double v = m2.value() / n;
  return {(m3.value() / n) / std::pow(v, 1.5), (m4.value() / n) / (v * v)};
}

/// Jarque-Bera statistic and its chi-square(2) tail probability.
struct JarqueBera {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline JarqueBera jarque_bera(std::span<const double> xs) {
  const Shape s = shape(xs);
  const double n = static_cast<double>(xs.size());
  const double jb =
      n / 6.0 * (s.skewness * s.skewness + (s.kurtosis - 3.0) * (s.kurtosis - 3.0) / 4.0);
  return {jb, std::exp(-jb / 2.0)};
}

/// One-sided p-value of H1: var_a > var_b, F = var_a / var_b.
inline double f_test_greater(double var_a, std::size_t n_a, double var_b, std::size_t n_b) {
  if (n_a < 2 || n_b < 2) throw InsufficientData("F-test needs at least two values per sample");
  if (!(var_b > 0.0)) return var_a > 0.0 ? 0.0 : 1.0;
  const boost::math::fisher_f dist(static_cast<double>(n_a - 1), static_cast<double>(n_b - 1));
  return boost::math::cdf(boost::math::complement(dist, var_a / var_b));
}

/// Ordinary least squares y = intercept + slope x.
struct LineFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double slope_se = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("fit_line: x and y differ in length");
  LineFit fit;
  fit.points = x.size();
  if (x.size() < 2) return fit;
  const double mx = mean(x);
  const double my = mean(y);
  KahanSum sxx, sxy, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx.value() > 0.0)) return fit;
  fit.slope = sxy.value() / sxx.value();
  fit.intercept = my - fit.slope * mx;
  KahanSum rss;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  fit.r2 = syy.value() > 0.0 ? 1.0 - rss.value() / syy.value() : 1.0;
  if (x.size() > 2) {
    fit.slope_se = std::sqrt(rss.value() / static_cast<double>(x.size() - 2) / sxx.value());
  }
  return fit;
}

}  // namespace fkdmc::stats
