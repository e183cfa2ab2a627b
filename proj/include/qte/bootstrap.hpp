#pragma once

// Multiplier bootstrap with iid Exp(1) unit weights, and the pointwise,
// quantile-difference and uniform-band inference built on its draws.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qte/adjust.hpp"
#include "qte/estimator.hpp"
#include "qte/rng.hpp"

namespace qte {

WeightVector draw_weights(std::size_t n, Rng& rng);

using WeightGenerator = std::function<WeightVector(std::size_t n, Rng& rng)>;

struct BootstrapOptions {
  std::size_t B = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  PiSource pi_source;
  WeightGenerator weight_generator;   // default: draw_weights
  double degenerate_threshold = 1e-8;  // relative to n(s)
  std::size_t max_redraws = 100;       // per replicate
};

struct BootstrapDraws {
  Eigen::MatrixXd draws;  // B x grid, QTE per draw
  std::size_t B = 0;
  QuantileGrid grid{std::vector<double>{0.5}};
  std::size_t redraws = 0;  // draws discarded for near-zero arm mass in a stratum

  std::vector<double> column(std::size_t k) const;
};

// Draw b uses the stream derive_seed(seed, {b, attempt}). The model is only
// evaluated, never refit.
BootstrapDraws run_bootstrap(const Dataset& data, const StrataStats& stats, const AdjustmentModel& model,
                             const QuantileGrid& grid, const BootstrapOptions& options);

// Same, reusing a prepared solver.
BootstrapDraws run_bootstrap(const Dataset& data, const StrataStats& stats, const QteSolver& solver,
                             const BootstrapOptions& options);

// (Q(0.975) - Q(0.025)) / (z(0.975) - z(0.025)) with type-7 empirical
// quantiles.
double bootstrap_se(std::span<const double> draws);

struct InferenceResult {
  double estimate = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double critical_value = 0.0;  // z(1 - alpha/2)
  double statistic = 0.0;       // |estimate - null| / se
  double null_value = 0.0;
  double alpha = 0.05;
  bool reject = false;
  bool zero_se = false;  // test reduced to estimate != null
};

InferenceResult pointwise_test(double estimate, std::span<const double> draws, double null_value, double alpha);

// Test of q(tau1) - q(tau2) = null from the per-draw differences.
InferenceResult difference_test(const QteEstimate& estimate, const BootstrapDraws& draws, double tau1, double tau2,
                                double null_value, double alpha);

struct UniformBand {
  std::vector<double> taus;
  std::vector<double> estimate, se, lower, upper;
  std::vector<bool> included;  // false where se = 0; such points are left out of the sup and the decision
  double critical_value = 0.0;
  double alpha = 0.05;
  bool reject = false;
  std::vector<std::string> warnings;
};

// Columns of `draws` align with `estimate`. `null_values` may be empty
// (no test) or hold one value per column.
UniformBand uniform_band(std::span<const double> taus, std::span<const double> estimate, const Eigen::MatrixXd& draws,
                         double alpha, std::span<const double> null_values = {});

// Band over a subset of the estimation grid.
UniformBand uniform_band(const QteEstimate& estimate, const BootstrapDraws& draws, std::span<const double> taus,
                         double alpha, std::span<const double> null_values = {});

}  // namespace qte
