#pragma once

// Fixed-lag ratio estimators streamed from per-step population summaries.
//
// For a trajectory with g_p = m(xi_p)(G) and f_p[j] = m(xi_p)(phi_j), the
// window starting at k with lag l contributes
//
//   F_phi(k, l) = f_{k+l}[j] * prod_{k <= p < k+l} g_p
//   F_1(k, l)   =               prod_{k <= p < k+l} g_p
//
// and the lag-l estimate is sum_k F_phi(k, l) / sum_k F_1(k, l).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fkdmc/error.hpp"
#include "fkdmc/kahan.hpp"

namespace fkdmc {

/// Population summary at one step: g = eta^N_p(G), f[j] = eta^N_p(phi_j).
struct StepRecord {
  std::size_t step = 0;
  double g = 1.0;
  std::vector<double> f;
};

/// Finalized estimates, indexed [lag position][test function].
struct EstimateReport {
  std::vector<std::size_t> lags;
  std::vector<std::vector<double>> ratio;
  std::vector<std::size_t> windows;
  double wall_seconds = 0.0;

  std::size_t lag_position(std::size_t lag) const {
    auto it = std::find(lags.begin(), lags.end(), lag);
    if (it == lags.end()) throw InvalidArgument("lag " + std::to_string(lag) + " not in report");
    return static_cast<std::size_t>(it - lags.begin());
  }
  double at(std::size_t lag, std::size_t phi_index) const {
    return ratio[lag_position(lag)][phi_index];
  }
};

/*!
  Streaming state for the lagged estimator at several lags simultaneously.

  Window products are read off compensated prefix sums of log g, so each step
  costs O(#lags * #functions) regardless of the lag size. With a window limit
  n, only windows k < n are accumulated; feeding n + max(lags) records then
  gives every lag exactly n windows.
*/
class LaggedAccumulator {
 public:
  LaggedAccumulator(std::vector<std::size_t> lags, std::size_t function_count,
                    std::optional<std::size_t> window_limit = std::nullopt)
      : lags_(std::move(lags)), functions_(function_count), window_limit_(window_limit) {
    if (lags_.empty()) throw InvalidArgument("LaggedAccumulator: no lags requested");
    std::sort(lags_.begin(), lags_.end());
    lags_.erase(std::unique(lags_.begin(), lags_.end()), lags_.end());
    max_lag_ = lags_.back();
    prefix_.resize(max_lag_ + 1);
    num_.assign(lags_.size(), std::vector<KahanSum>(functions_));
    den_.assign(lags_.size(), KahanSum{});
    count_.assign(lags_.size(), 0);
  }

  const std::vector<std::size_t>& lags() const { return lags_; }
  std::size_t function_count() const { return functions_; }
  std::size_t records_seen() const { return seen_; }

  void record_step(const StepRecord& rec) {
    if (rec.step != seen_) {
      throw SequencingError("record_step: expected step " + std::to_string(seen_) +
                            ", got " + std::to_string(rec.step));
    }
    if (rec.f.size() != functions_) {
      throw InvalidArgument("record_step: expected " + std::to_string(functions_) +
                            " test-function values, got " + std::to_string(rec.f.size()));
    }
    if (!(rec.g > 0.0) || !std::isfinite(rec.g)) {
      throw InvalidArgument("record_step: g must be finite and > 0 at step " +
                            std::to_string(rec.step));
    }
    const std::size_t p = rec.step;
    const KahanSum& s_p = prefix_at(p);
    for (std::size_t i = 0; i < lags_.size(); ++i) {
      const std::size_t lag = lags_[i];
      if (lag > p) break;
      const std::size_t k = p - lag;
      if (window_limit_ && k >= *window_limit_) continue;
      const double product = std::exp(compensated_difference(s_p, prefix_at(k)));
      for (std::size_t j = 0; j < functions_; ++j) num_[i][j] += rec.f[j] * product;
      den_[i] += product;
      ++count_[i];
    }
    KahanSum next = s_p;
    next += std::log(rec.g);
    prefix_[(p + 1) % prefix_.size()] = next;
    ++seen_;
  }

  std::size_t windows(std::size_t lag_position) const { return count_[lag_position]; }
  double numerator_sum(std::size_t lag_position, std::size_t j) const {
    return num_[lag_position][j].value();
  }
  double denominator_sum(std::size_t lag_position) const { return den_[lag_position].value(); }

  EstimateReport finalize() const {
    EstimateReport report;
    report.lags = lags_;
    report.windows = count_;
    report.ratio.resize(lags_.size());
    for (std::size_t i = 0; i < lags_.size(); ++i) {
      if (count_[i] == 0) {
        throw InsufficientData("finalize: no complete window for lag " +
                               std::to_string(lags_[i]));
      }
      report.ratio[i].resize(functions_);
      const double den = den_[i].value();
      for (std::size_t j = 0; j < functions_; ++j) report.ratio[i][j] = num_[i][j].value() / den;
    }
    return report;
  }

 private:
  const KahanSum& prefix_at(std::size_t step) const { return prefix_[step % prefix_.size()]; }

  std::vector<std::size_t> lags_;
  std::size_t functions_;
  std::optional<std::size_t> window_limit_;
  std::size_t max_lag_ = 0;
  std::size_t seen_ = 0;
  std::vector<KahanSum> prefix_;  // ring of S_p = sum_{q<p} log g_q, last max_lag+1 steps
  std::vector<std::vector<KahanSum>> num_;
  std::vector<KahanSum> den_;
  std::vector<std::size_t> count_;
};

/// Streams `records` through a fresh accumulator and finalizes it.
inline EstimateReport lagged_estimate(std::span<const StepRecord> records,
                                      const std::vector<std::size_t>& lags,
                                      std::optional<std::size_t> window_limit = std::nullopt) {
  if (records.empty()) throw InsufficientData("lagged_estimate: empty record stream");
  LaggedAccumulator acc(lags, records.front().f.size(), window_limit);
  for (const auto& r : records) acc.record_step(r);
  return acc.finalize();
}

/// (1/n) sum_k eta^N_k(G): the plain time-averaged estimate of lambda.
inline double standard_estimator(std::span<const StepRecord> records) {
  if (records.empty()) throw InsufficientData("standard_estimator: empty record stream");
  KahanSum s;
  for (const auto& r : records) s += r.g;
  return s.value() / static_cast<double>(records.size());
}

/// Numerator windows from `records_a`, denominator windows from the
/// independent `records_b`, aligned on the same k-range.
inline std::vector<double> independent_ratio(std::span<const StepRecord> records_a,
                                             std::span<const StepRecord> records_b,
                                             const std::vector<std::size_t>& lags,
                                             std::size_t phi_index) {
  if (records_a.size() != records_b.size()) {
    throw InvalidArgument("independent_ratio: record streams differ in length (" +
                          std::to_string(records_a.size()) + " vs " +
                          std::to_string(records_b.size()) + ")");
  }
  if (records_a.empty()) throw InsufficientData("independent_ratio: empty record streams");
  if (phi_index >= records_a.front().f.size()) {
    throw InvalidArgument("independent_ratio: phi_index out of range");
  }
  const std::size_t max_lag = *std::max_element(lags.begin(), lags.end());
  if (records_a.size() <= max_lag) {
    throw InsufficientData("independent_ratio: streams shorter than the largest lag");
  }
  const std::size_t n = records_a.size() - max_lag;
  LaggedAccumulator a(lags, records_a.front().f.size(), n);
  LaggedAccumulator b(lags, records_b.front().f.size(), n);
  for (const auto& r : records_a) a.record_step(r);
  for (const auto& r : records_b) b.record_step(r);
  std::vector<double> out;
  out.reserve(lags.size());
  for (std::size_t lag : lags) {
    const auto& sorted = a.lags();
    const auto pos = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), lag) - sorted.begin());
    out.push_back(a.numerator_sum(pos, phi_index) / b.denominator_sum(pos));
  }
  return out;
}

struct BatchMeansResult {
  double ratio = 0.0;          // full-sample lagged estimate
  double sigma2 = 0.0;         // estimate of the asymptotic variance in the sqrt(n) CLT
  double variance_of_mean = 0.0;  // sigma2 / n
  std::size_t windows = 0;
  std::size_t batches = 0;
  std::size_t batch_size = 0;
};

/*!
  Non-overlapping batch means for the lag-l ratio.

  The k-range is cut into `batch_count` contiguous batches of equal size
  floor(n / batch_count); leftover windows only enter the point estimate.
  The ratio is linearized around the full-sample value,
  z_b = (num_b - r den_b) / mean(den), and sigma2 = batch_size * Var(z_b).

  Window products are summed directly over each window (not through prefix
  sums), so this is an independent route to the streamed estimate.
  `windows` defaults to records.size() - lag.
*/
inline BatchMeansResult batch_means_variance(std::span<const StepRecord> records,
                                             std::size_t lag, std::size_t phi_index,
                                             std::optional<std::size_t> batch_count = std::nullopt,
                                             std::optional<std::size_t> windows = std::nullopt) {
  if (records.size() <= lag) {
    throw InsufficientData("batch_means_variance: no complete window for lag " +
                           std::to_string(lag));
  }
  const std::size_t n = windows.value_or(records.size() - lag);
  if (n == 0 || n + lag > records.size()) {
    throw InsufficientData("batch_means_variance: requested windows exceed the record stream");
  }
  if (phi_index >= records.front().f.size()) {
    throw InvalidArgument("batch_means_variance: phi_index out of range");
  }
  const std::size_t batches =
      batch_count.value_or(static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n)))));
  if (batches < 2) throw InvalidArgument("batch_means_variance: batch_count must be >= 2");
  const std::size_t batch_size = n / batches;
  if (batch_size == 0) {
    throw InsufficientData("batch_means_variance: " + std::to_string(n) +
                           " windows cannot fill " + std::to_string(batches) + " batches");
  }

  std::vector<double> log_g(n + lag);
  for (std::size_t p = 0; p < n + lag; ++p) log_g[p] = std::log(records[p].g);

  std::vector<double> num(n);
  std::vector<double> den(n);
  KahanSum num_total;
  KahanSum den_total;
  for (std::size_t k = 0; k < n; ++k) {
    double window_log = 0.0;
    for (std::size_t p = k; p < k + lag; ++p) window_log += log_g[p];
    const double product = std::exp(window_log);
    den[k] = product;
    num[k] = records[k + lag].f[phi_index] * product;
    num_total += num[k];
    den_total += den[k];
  }

  BatchMeansResult out;
  out.windows = n;
  out.batches = batches;
  out.batch_size = batch_size;
  out.ratio = num_total.value() / den_total.value();
  const double den_mean = den_total.value() / static_cast<double>(n);

  // Welford over batch-level linearized residuals.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    KahanSum bn;
    KahanSum bd;
    for (std::size_t k = b * batch_size; k < (b + 1) * batch_size; ++k) {
      bn += num[k];
      bd += den[k];
    }
    const double size = static_cast<double>(batch_size);
    const double z = (bn.value() / size - out.ratio * (bd.value() / size)) / den_mean;
    const double delta = z - mean;
    mean += delta / static_cast<double>(b + 1);
    m2 += delta * (z - mean);
  }
  const double batch_var = m2 / static_cast<double>(batches - 1);
  out.sigma2 = static_cast<double>(batch_size) * batch_var;
  out.variance_of_mean = out.sigma2 / static_cast<double>(n);
  return out;
}

/// Writes "step,g,f_0,...,f_{J-1}" with 17 significant digits.
inline void write_records_csv(std::ostream& os, std::span<const StepRecord> records) {
  const std::size_t functions = records.empty() ? 0 : records.front().f.size();
  os << "step,g";
  for (std::size_t j = 0; j < functions; ++j) os << ",f_" << j;
  os << '\n';
  char buf[64];
  for (const auto& r : records) {
    os << r.step;
    std::snprintf(buf, sizeof buf, ",%.17g", r.g);
    os << buf;
    for (double v : r.f) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      os << buf;
    }
    os << '\n';
  }
}

inline std::vector<StepRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("record csv: missing header");
  std::size_t columns = 1;
  for (char c : line) columns += (c == ',');
  if (columns < 2 || line.rfind("step,g", 0) != 0) {
    throw InvalidArgument("record csv: header must start with 'step,g'");
  }
  std::vector<StepRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) {
      throw InvalidArgument("record csv: line " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " columns, expected " +
                            std::to_string(columns));
    }
    StepRecord r;
    try {
      r.step = static_cast<std::size_t>(std::stoull(cells[0]));
      r.g = std::stod(cells[1]);
      for (std::size_t j = 2; j < cells.size(); ++j) r.f.push_back(std::stod(cells[j]));
    } catch (const std::exception&) {
      throw InvalidArgument("record csv: unparsable value on line " + std::to_string(line_no));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fkdmc
