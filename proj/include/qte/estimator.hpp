#pragma once

// Regression-adjusted arm quantiles solved from the subgradient conditions
// of the weighted check-function problem, by one sweep over the sorted arm
// outcomes.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qte/adjust.hpp"
#include "qte/data.hpp"

namespace qte {

// Propensity used in the moment: the (weighted) within-stratum treated share
// or a user-supplied constant per stratum.
struct PiSource {
  enum class Mode { estimated, fixed };
  Mode mode = Mode::estimated;
  std::vector<double> values;  // fixed mode: one value for all strata, or one per stratum

  static PiSource estimated() { return {}; }
  static PiSource fixed(double pi) { return {Mode::fixed, {pi}}; }
  static PiSource fixed(std::vector<double> per_stratum) { return {Mode::fixed, std::move(per_stratum)}; }

  bool is_fixed() const noexcept { return mode == Mode::fixed; }
  double pi(const StrataStats& stats, int stratum) const;
  void validate(std::size_t num_strata) const;
};

// "estimated", "fixed:0.5" or "fixed:0.4,0.5,0.6".
PiSource parse_pi_source(const std::string& text);
std::string to_string(const PiSource& source);

struct ArmQuantileProblem {
  int arm = 1;
  double tau = 0.5;
  WeightVector weights;
  PiSource pi_source;
  Eigen::VectorXd mhat_values;  // m_a(tau, S_i, X_i), one per unit
};

// Smallest observed arm outcome at which the right derivative of the
// objective is nonnegative. `stats` must come from `problem.weights`.
double solve_arm_quantile(const ArmQuantileProblem& problem, const Dataset& data, const StrataStats& stats);

struct QteEstimate {
  std::vector<double> taus;
  std::vector<double> q1, q0, qte;
};

// Sorted candidates and m_a values for every grid point, computed once so
// that each weighted solve is linear in n.
class QteSolver {
 public:
  QteSolver(const Dataset& data, const AdjustmentModel& model, PiSource pi_source = PiSource::estimated());
  // Externally supplied m_a(tau_k, S_i, X_i): mhat1 and mhat0 are n x grid.
  QteSolver(const Dataset& data, QuantileGrid grid, const Eigen::MatrixXd& mhat1, const Eigen::MatrixXd& mhat0,
            PiSource pi_source = PiSource::estimated());

  const QuantileGrid& grid() const noexcept { return grid_; }
  std::size_t n() const noexcept { return a_.size(); }

  // `stats` must come from `weights`.
  QteEstimate solve(const WeightVector& weights, const StrataStats& stats) const;
  double solve_arm(int arm, std::size_t k, const WeightVector& weights, const StrataStats& stats) const;

 private:
  struct ArmCandidates {
    std::vector<std::size_t> order;        // arm members sorted by outcome
    std::vector<std::size_t> group_end;    // end offsets of runs of equal outcomes
    Eigen::MatrixXd mhat;                  // grid x n
  };

  void prepare(const Dataset& data);

  QuantileGrid grid_;
  PiSource pi_source_;
  std::vector<double> y_;
  std::vector<int> a_;
  std::vector<int> s_;
  std::array<ArmCandidates, 2> arms_;
};

QteEstimate estimate_qte(const Dataset& data, const StrataStats& stats, const AdjustmentModel& model,
                const QuantileGrid& grid, const WeightVector& weights,
                const PiSource& pi_source = PiSource::estimated());

// Unadjusted arm quantiles at every grid point.
PilotQuantiles pilot_quantiles(const Dataset& data, const StrataStats& stats, const QuantileGrid& grid,
                               const PiSource& pi_source = PiSource::estimated());

}  // namespace qte
