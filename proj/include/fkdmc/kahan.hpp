#pragma once

#include <cmath>

namespace fkdmc {

/*!
  Compensated (Neumaier) summation.

  Tracks the low-order bits lost by each addition and folds them back in when
  the value is read. Used for every long-running accumulation in the library:
  log-potential prefix sums and the lagged numerator/denominator sums.
*/
struct KahanSum {
  double sum = 0.0;
  double compensation = 0.0;

  void add(double value) {
    const double t = sum + value;
    if (std::fabs(sum) >= std::fabs(value)) {
      compensation += (sum - t) + value;
    } else {
      compensation += (value - t) + sum;
    }
    sum = t;
  }

  KahanSum& operator+=(double value) {
    add(value);
    return *this;
  }

  double value() const { return sum + compensation; }
};

/// Difference a - b of two compensated sums, keeping both halves.
inline double compensated_difference(const KahanSum& a, const KahanSum& b) {
  return (a.sum - b.sum) + (a.compensation - b.compensation);
}

}  // namespace fkdmc
