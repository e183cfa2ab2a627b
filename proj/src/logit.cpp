#include "qte/logit.hpp"

#include <cmath>
#include <limits>

#include "qte/error.hpp"
#include "qte/numeric.hpp"

namespace qte {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double penalized_objective(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                           double ridge) {
  return logit_mean_loglik(h, y, theta) - 0.5 * ridge * theta.squaredNorm();
}

struct NewtonResult {
  LogitFit fit;
  bool hit_cap = false;
};

NewtonResult newton(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, double ridge, const LogitOptions& opt,
                    double cap) {
  const auto n = static_cast<double>(h.rows());
  const auto p = h.cols();
  NewtonResult out;
  LogitFit& fit = out.fit;
  fit.theta = Eigen::VectorXd::Zero(p);
  double obj = penalized_objective(h, y, fit.theta, ridge);

  for (std::size_t it = 0; it <= opt.max_iter; ++it) {
    const Eigen::VectorXd eta = h * fit.theta;
    Eigen::VectorXd prob(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      prob(i) = logistic(eta(i));
      w(i) = prob(i) * (1.0 - prob(i));
    }
    const Eigen::VectorXd grad = h.transpose() * (y - prob) / n - ridge * fit.theta;
    fit.score_norm = grad.lpNorm<Eigen::Infinity>();
    fit.iterations = it;
    if (fit.score_norm <= opt.score_tol) {
      fit.converged = true;
      return out;
    }
    if (it == opt.max_iter) break;

    Eigen::MatrixXd hess = h.transpose() * w.asDiagonal() * h / n;
    hess.diagonal().array() += ridge;
    Eigen::VectorXd step;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    const double scale = std::max(1.0, hess.diagonal().maxCoeff());
    const bool pd = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                    ldlt.vectorD().minCoeff() > 1e-12 * scale;
    if (pd) {
      step = ldlt.solve(grad);
    } else {
      fit.rank_deficient = true;
      step = hess.completeOrthogonalDecomposition().solve(grad);
    }

    double t = 1.0;
    Eigen::VectorXd cand;
    double cand_obj = obj;
    for (int half = 0; half < 60; ++half) {
      cand = fit.theta + t * step;
      cand_obj = penalized_objective(h, y, cand, ridge);
      if (cand_obj >= obj - 1e-15 * std::max(1.0, std::abs(obj))) break;
      t *= 0.5;
    }
    if (cand_obj < obj - 1e-15 * std::max(1.0, std::abs(obj))) break;  // no ascent direction left
    fit.theta = cand;
    obj = cand_obj;
    if (fit.theta.lpNorm<Eigen::Infinity>() > cap) {
      out.hit_cap = true;
      return out;
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd logit_score(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = h * theta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r(i) = y(i) - logistic(eta(i));
  return h.transpose() * r / static_cast<double>(h.rows());
}

double logit_mean_loglik(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = h * theta;
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < eta.size(); ++i) acc.add(y(i) * eta(i) - softplus(eta(i)));
  return acc.value() / static_cast<double>(h.rows());
}

LogitFit fit_logit_cell(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, double ridge,
                        const LogitOptions& options) {
  if (h.rows() < 1) throw NumericalError("logistic fit needs at least one observation");
  if (h.rows() != y.size()) throw UsageError("logistic design and label lengths differ");
  if (ridge < 0.0) throw UsageError("ridge must be nonnegative");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw UsageError("logistic labels must be 0 or 1");
  }
  const double ybar = y.mean();
  const bool constant = ybar == 0.0 || ybar == 1.0;

  if (!constant) {
    NewtonResult r = newton(h, y, ridge, options, options.separation_cap);
    // A perfect in-sample fit means the score vanished only because |theta|
    // ran off toward infinity.
    const bool perfect = (y - (h * r.fit.theta).unaryExpr([](double e) { return logistic(e); }))
                             .lpNorm<Eigen::Infinity>() < 1e-6;
    if (!r.hit_cap && !perfect) return r.fit;
  }
  // Separation or constant labels: the unpenalized MLE does not exist.
  NewtonResult r = newton(h, y, std::max(ridge, options.fallback_ridge), options,
                          std::numeric_limits<double>::infinity());
  r.fit.separation = true;
  r.fit.constant_labels = constant;
  return r.fit;
}

}  // namespace qte
