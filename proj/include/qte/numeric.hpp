#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace qte {

// Neumaier compensated summation. Totals are stable to ~1 ulp of the exact
// sum irrespective of accumulation order for well-scaled inputs.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double v) noexcept {
    add(v);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_total(std::span<const double> values);

// Logistic CDF, evaluated without overflow for large |x|.
inline double logistic(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double normal_cdf(double x);
double normal_quantile(double p);

// Empirical quantile of already-sorted data, linear interpolation at the
// 1-based rank nu*(B-1)+1 (Hyndman-Fan type 7).
double sorted_quantile(std::span<const double> sorted, double nu);

// Same convention on unsorted input (copies and sorts).
double empirical_quantile(std::span<const double> values, double nu);

// Inverse-CDF quantile: smallest order statistic x_(k) with k/n >= tau.
// Used for population truths, where interpolation is immaterial.
double inverse_cdf_quantile(std::vector<double>& values, double tau);

}  // namespace qte
