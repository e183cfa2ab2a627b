#pragma once

// Auxiliary working models m_a(tau, s, x) fitted per (arm, stratum, tau)
// cell on the labels 1{Y <= q_a(tau)} at pilot quantiles. Every non-trivial
// rule evaluates as tau minus a fitted probability-type index.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qte/data.hpp"
#include "qte/features.hpp"
#include "qte/lasso.hpp"
#include "qte/logit.hpp"

namespace qte {

enum class Method { na, lp, ml, lpml, mlx, lpmlx, np, hd };

Method parse_method(const std::string& name);  // "lasso" and "hd" both name the HD method
std::string to_string(Method method);
std::vector<Method> parse_method_list(const std::string& comma_separated);

// Pilot quantiles per arm and grid index.
struct PilotQuantiles {
  std::vector<double> q1, q0;
  double at(int arm, std::size_t k) const { return arm == 1 ? q1.at(k) : q0.at(k); }
};

enum class CellRule { zero, linear, logistic, lpml };

struct CellFit {
  CellRule rule = CellRule::zero;
  std::size_t n_cell = 0;
  Eigen::VectorXd theta;  // on W(x), H(x) or the normalized LPML regressors
  // LPML only: the two logistic fits generating the regressors and the
  // per-cell centering and scaling. A zero-variance column contributes 0.
  Eigen::VectorXd theta_ml1, theta_ml0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2d scale = Eigen::Vector2d::Ones();
  std::array<bool, 2> zero_variance{false, false};
  bool degraded = false;  // too small to fit; evaluates to 0
};

struct LassoCellEntry {
  int arm = 0;
  int stratum = 0;
  std::size_t tau_index = 0;
  LassoCellReport report;
};

struct FitDiagnostics {
  std::size_t cells = 0;
  std::size_t degraded_cells = 0;
  std::size_t singular_gram_cells = 0;
  std::size_t separation_cells = 0;
  std::size_t nonconverged_cells = 0;
  std::size_t zero_variance_columns = 0;
  std::size_t lasso_capped_cells = 0;
  std::size_t lasso_constant_cells = 0;
  double max_logit_score = 0.0;  // over converged logistic cells without fallback
  double max_lp_residual = 0.0;  // normal-equation residual, LP and LPML
  double max_kkt_residual = 0.0;  // over lasso cells with non-constant labels
  std::vector<std::string> warnings;
  std::vector<LassoCellEntry> lasso;
};

class AdjustmentModel {
 public:
  AdjustmentModel(Method method, FeatureMap features, QuantileGrid grid, std::size_t num_strata);

  Method method() const noexcept { return method_; }
  const FeatureMap& features() const noexcept { return features_; }
  const QuantileGrid& grid() const noexcept { return grid_; }
  std::size_t num_strata() const noexcept { return num_strata_; }

  CellFit& cell(int arm, int stratum, std::size_t k);
  const CellFit& cell(int arm, int stratum, std::size_t k) const;

  // m_a(tau, s, x). Throws UnknownStratumError / UnfittedTauError.
  double evaluate(int arm, double tau, int stratum, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double evaluate_at(int arm, std::size_t k, int stratum, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  // m_a(tau_k, S_i, X_i) for every unit of `data`.
  Eigen::VectorXd evaluate_all(const Dataset& data, int arm, std::size_t k) const;

  // HD only: evaluate as logistic(H'theta) without the leading tau.
  bool literal_hd_evaluation = false;
  FitDiagnostics diagnostics;

 private:
  std::size_t slot(int arm, int stratum, std::size_t k) const;

  Method method_;
  FeatureMap features_;
  QuantileGrid grid_;
  std::size_t num_strata_;
  std::vector<CellFit> cells_;
};

AdjustmentModel fit_none(const QuantileGrid& grid, std::size_t num_strata, std::size_t dim);

// W(x) = features(x); m = tau - W(x)'theta.
AdjustmentModel fit_lp(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                       const QuantileGrid& grid, const FeatureMap& features, unsigned threads = 1);

// m = tau - logistic(H(x)'theta). `tag` labels the model (ml, mlx or np).
AdjustmentModel fit_ml(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                       const QuantileGrid& grid, const FeatureMap& features, const LogitOptions& logit = {},
                       unsigned threads = 1, Method tag = Method::ml);

// Linear recombination of both arms' logistic fits with a ridge of size
// `delta` on the standardized regressors; a negative delta means 1/n.
AdjustmentModel fit_lpml(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                         const QuantileGrid& grid, const FeatureMap& features, double delta = -1.0,
                         const LogitOptions& logit = {}, unsigned threads = 1, Method tag = Method::lpml);

// Throws CellTooSmallError when the sieve is wider than some cell.
AdjustmentModel fit_np(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                       const QuantileGrid& grid, const FeatureMap& sieve_map, const LogitOptions& logit = {},
                       unsigned threads = 1);

AdjustmentModel fit_hd_lasso(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                             const QuantileGrid& grid, const FeatureMap& dictionary, const LassoConfig& config,
                             const LogitOptions& logit = {}, unsigned threads = 1);

struct AdjustOptions {
  Method method = Method::na;
  std::optional<FeatureMap> features;  // overrides the method default
  SieveSpec sieve;
  LassoConfig lasso;
  std::optional<double> lpml_delta;  // default 1/n
  LogitOptions logit;
  bool literal_hd_evaluation = false;
  unsigned threads = 1;
};

// LP: raw covariates; ML/LPML: intercept plus raw; MLX/LPMLX: with pairwise
// interactions; NP: sieve from `options.sieve`; HD: intercept plus raw.
FeatureMap default_features(Method method, const Dataset& data, const SieveSpec& sieve = {});

AdjustmentModel fit_adjustment(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                               const QuantileGrid& grid, const AdjustOptions& options);

// Units and arms for which the fitted CDF tau - m_a(tau, s, x) decreases
// between adjacent grid points. Diagnostic only.
std::size_t count_cdf_crossings(const AdjustmentModel& model, const Dataset& data);

}  // namespace qte
