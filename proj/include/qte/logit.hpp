#pragma once

// Logistic quasi-maximum likelihood for a single (arm, stratum, tau) cell.

#include <cstddef>

#include <Eigen/Dense>

namespace qte {

struct LogitOptions {
  std::size_t max_iter = 100;
  double score_tol = 1e-8;
  // |theta|_inf beyond this during Newton iterations is treated as separation.
  double separation_cap = 30.0;
  // Ridge used for the refit after separation, on the mean log-likelihood.
  double fallback_ridge = 1e-4;
};

struct LogitFit {
  Eigen::VectorXd theta;
  double score_norm = 0.0;  // max |(1/n) H'(y - p) - ridge*theta|
  std::size_t iterations = 0;
  bool converged = false;
  bool separation = false;     // fallback ridge refit was used
  bool constant_labels = false;
  bool rank_deficient = false;  // Hessian solved by pseudo-inverse
};

// Maximizes (1/n) sum [y log p + (1-y) log(1-p)] - (ridge/2)|theta|^2 over
// theta, p = logistic(H theta), by damped Newton steps. Rows of `h` are
// observations; `y` holds 0/1 labels.
LogitFit fit_logit_cell(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, double ridge = 0.0,
                        const LogitOptions& options = {});

// (1/n) H'(y - logistic(H theta)).
Eigen::VectorXd logit_score(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta);

// Mean log-likelihood (1/n) sum [y log p + (1-y) log(1-p)], computed stably.
double logit_mean_loglik(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta);

}  // namespace qte
