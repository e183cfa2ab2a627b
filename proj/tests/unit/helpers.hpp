#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qte/data.hpp"
#include "qte/rng.hpp"

namespace testing {

// Check-function loss.
inline double rho(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

// Direct evaluation of the adjusted arm objective at q, with per-stratum
// propensities pi[s].
inline double arm_objective(const qte::Dataset& d, const std::vector<double>& w, const std::vector<double>& pi,
                            const Eigen::VectorXd& m, int arm, double tau, double q) {
  long double f = 0.0L;
  for (std::size_t i = 0; i < d.n(); ++i) {
    const double p = pi[static_cast<std::size_t>(d.stratum(i))];
    const double a = d.a(i);
    const double mi = m(static_cast<Eigen::Index>(i));
    if (arm == 1) {
      f += w[i] * (a / p) * rho(d.y(i) - q, tau) + w[i] * (a - p) / p * mi * q;
    } else {
      f += w[i] * ((1.0 - a) / (1.0 - p)) * rho(d.y(i) - q, tau) - w[i] * (a - p) / (1.0 - p) * mi * q;
    }
  }
  return static_cast<double>(f);
}

// Smallest minimizer of the objective over the observed arm outcomes.
inline double brute_force_quantile(const qte::Dataset& d, const std::vector<double>& w, const std::vector<double>& pi,
                                   const Eigen::VectorXd& m, int arm, double tau) {
  std::vector<double> cand;
  for (std::size_t i = 0; i < d.n(); ++i) {
    if (d.a(i) == arm) cand.push_back(d.y(i));
  }
  std::vector<double> vals;
  double best = std::numeric_limits<double>::infinity();
  for (double c : cand) {
    vals.push_back(arm_objective(d, w, pi, m, arm, tau, c));
    best = std::min(best, vals.back());
  }
  double scale = 1.0;
  for (double v : vals) scale = std::max(scale, std::abs(v));
  double pick = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cand.size(); ++j) {
    if (vals[j] <= best + 1e-9 * scale) pick = std::min(pick, cand[j]);
  }
  return pick;
}

// Random balanced-enough instance: every stratum has both arms.
inline qte::Dataset random_instance(qte::Rng& rng, std::size_t n, int strata, bool integer_outcomes) {
  std::uniform_int_distribution<int> sdist(0, strata - 1);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> ydist(0, 6);
  for (;;) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    std::vector<int> a(n), s(n);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = sdist(rng);
      a[i] = coin(rng) ? 1 : 0;
      y(static_cast<Eigen::Index>(i)) = integer_outcomes ? ydist(rng) : nd(rng);
      x(static_cast<Eigen::Index>(i), 0) = nd(rng);
    }
    std::vector<int> n1(strata, 0), n0(strata, 0);
    for (std::size_t i = 0; i < n; ++i) (a[i] ? n1 : n0)[s[i]]++;
    bool ok = true;
    for (int k = 0; k < strata; ++k) ok = ok && n1[k] > 0 && n0[k] > 0;
    if (ok) return qte::Dataset::from_strata(y, a, s, x);
  }
}

}  // namespace testing
