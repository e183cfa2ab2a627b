#include "qte/numeric.hpp"

#include <algorithm>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace qte {

double compensated_total(std::span<const double> values) {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: probability must lie in (0,1)");
  }
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

double sorted_quantile(std::span<const double> sorted, double nu) {
  if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty input");
  if (!(nu >= 0.0 && nu <= 1.0)) throw std::domain_error("sorted_quantile: nu outside [0,1]");
  const double h = nu * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0 || lo == hi) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double empirical_quantile(std::span<const double> values, double nu) {
  std::vector<double> copy(values.begin(), values.end());
  std::sort(copy.begin(), copy.end());
  return sorted_quantile(copy, nu);
}

double inverse_cdf_quantile(std::vector<double>& values, double tau) {
  if (values.empty()) throw std::invalid_argument("inverse_cdf_quantile: empty input");
  const double n = static_cast<double>(values.size());
  auto k = static_cast<std::size_t>(std::ceil(tau * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, values.size());
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

}  // namespace qte
