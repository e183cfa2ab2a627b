#pragma once

// l1-penalized logistic regression with data-driven penalty loadings and an
// unpenalized post-selection refit, for one (arm, stratum, tau) cell.

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qte/logit.hpp"

namespace qte {

enum class PenaltyForm {
  // c sqrt(n_a) Phi^{-1}(1 - 1/(p log n_a))
  implementation,
  // c sqrt(n_a) Phi^{-1}(1 - 0.1/(4 log(n_a) p))
  theory,
};

struct LassoConfig {
  double c = 1.1;
  std::size_t loading_iterations = 2;  // K
  double loading_tol = 1e-4;           // early stop on relative loading change
  std::vector<std::size_t> forced_support;
  std::size_t max_support_cap = 20;
  PenaltyForm penalty_form = PenaltyForm::implementation;
  double kkt_tol = 1e-9;
  std::size_t max_newton = 500;
  std::size_t max_sweeps = 10000;

  void validate() const;
};

struct LassoCellReport {
  double penalty = 0.0;  // rho
  Eigen::VectorXd loadings;
  Eigen::VectorXd theta_lasso;
  std::vector<std::size_t> support;       // nonzero coordinates of theta_lasso (intercept excluded)
  std::vector<std::size_t> post_support;  // columns used by the refit
  Eigen::VectorXd theta_post;             // full length, zero off post_support
  double kkt_residual = 0.0;
  std::size_t loading_rounds = 0;
  bool converged = true;
  bool constant_labels = false;  // lasso skipped, no KKT check
  bool support_capped = false;
  bool post_separation = false;
};

double lasso_penalty(std::size_t n_cell, std::size_t p, double c, PenaltyForm form);

// Largest violation of the subgradient conditions of
// -(1/n) loglik(theta) + (rho/n) sum_h loading_h |theta_h|.
double lasso_kkt_residual(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                          double penalty, const Eigen::VectorXd& loadings);

// Solves the weighted-l1 problem above by proximal Newton steps with an
// inner coordinate descent. Returns the minimizer; `kkt` receives the final
// residual.
Eigen::VectorXd solve_weighted_lasso_logit(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, double penalty,
                                           const Eigen::VectorXd& loadings, const LassoConfig& config,
                                           Eigen::VectorXd start, double* kkt, bool* converged);

// `intercept` (if any) is never penalized and always kept in the refit.
LassoCellReport fit_lasso_cell(const Eigen::MatrixXd& h, const Eigen::VectorXd& y,
                               std::optional<std::size_t> intercept, const LassoConfig& config,
                               const LogitOptions& logit = {});

}  // namespace qte
