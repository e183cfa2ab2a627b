#include "qte/lasso.hpp"

#include <algorithm>
#include <cmath>

#include "qte/error.hpp"
#include "qte/numeric.hpp"

namespace qte {
namespace {

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

double objective(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                 const Eigen::VectorXd& lambda) {
  return -logit_mean_loglik(h, y, theta) + lambda.dot(theta.cwiseAbs());
}

double kkt_from_score(const Eigen::VectorXd& score, const Eigen::VectorXd& theta, const Eigen::VectorXd& lambda) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    double v = 0.0;
    if (theta(j) > 0.0) {
      v = std::abs(score(j) - lambda(j));
    } else if (theta(j) < 0.0) {
      v = std::abs(score(j) + lambda(j));
    } else {
      v = std::max(0.0, std::abs(score(j)) - lambda(j));
    }
    worst = std::max(worst, v);
  }
  return worst;
}

Eigen::VectorXd initial_loadings(const Eigen::MatrixXd& h, const Eigen::VectorXd& y,
                                 std::optional<std::size_t> intercept) {
  const double ybar = y.mean();
  Eigen::VectorXd out(h.cols());
  for (Eigen::Index j = 0; j < h.cols(); ++j) {
    CompensatedSum acc;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      const double e = y(i) - ybar;
      acc.add(e * e * h(i, j) * h(i, j));
    }
    out(j) = acc.value() / static_cast<double>(h.rows());
  }
  if (intercept) out(static_cast<Eigen::Index>(*intercept)) = 0.0;
  return out;
}

Eigen::VectorXd residual_loadings(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                                  std::optional<std::size_t> intercept) {
  const Eigen::VectorXd eta = h * theta;
  Eigen::VectorXd eps(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eps(i) = y(i) - logistic(eta(i));
  Eigen::VectorXd out(h.cols());
  for (Eigen::Index j = 0; j < h.cols(); ++j) {
    CompensatedSum acc;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      const double v = h(i, j) * eps(i);
      acc.add(v * v);
    }
    out(j) = std::sqrt(acc.value() / static_cast<double>(h.rows()));
  }
  if (intercept) out(static_cast<Eigen::Index>(*intercept)) = 0.0;
  return out;
}

double max_relative_change(const Eigen::VectorXd& prev, const Eigen::VectorXd& next) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < prev.size(); ++j) {
    const double denom = std::max(std::abs(prev(j)), 1e-300);
    if (prev(j) == 0.0 && next(j) == 0.0) continue;
    worst = std::max(worst, std::abs(next(j) - prev(j)) / denom);
  }
  return worst;
}

}  // namespace

void LassoConfig::validate() const {
  if (!(c > 0.0)) throw UsageError("lasso penalty constant c must be positive");
  if (loading_iterations < 1) throw UsageError("lasso loading iterations K must be at least 1");
  if (max_support_cap < 1) throw UsageError("lasso support cap must be at least 1");
}

double lasso_penalty(std::size_t n_cell, std::size_t p, double c, PenaltyForm form) {
  if (n_cell < 2 || p < 1) throw NumericalError("lasso penalty needs n_a >= 2 and p >= 1");
  const double n = static_cast<double>(n_cell);
  const double pd = static_cast<double>(p);
  const double tail = form == PenaltyForm::implementation ? 1.0 / (pd * std::log(n)) : 0.1 / (4.0 * std::log(n) * pd);
  if (!(tail > 0.0 && tail < 1.0)) throw NumericalError("lasso penalty level undefined for this cell size");
  return c * std::sqrt(n) * normal_quantile(1.0 - tail);
}

double lasso_kkt_residual(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                          double penalty, const Eigen::VectorXd& loadings) {
  const Eigen::VectorXd lambda = loadings * (penalty / static_cast<double>(h.rows()));
  return kkt_from_score(logit_score(h, y, theta), theta, lambda);
}

Eigen::VectorXd solve_weighted_lasso_logit(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, double penalty,
                                           const Eigen::VectorXd& loadings, const LassoConfig& config,
                                           Eigen::VectorXd theta, double* kkt, bool* converged) {
  const auto n = static_cast<double>(h.rows());
  const auto p = h.cols();
  if (theta.size() != p) theta = Eigen::VectorXd::Zero(p);
  const Eigen::VectorXd lambda = loadings * (penalty / n);
  bool ok = false;
  double resid = 0.0;

  for (std::size_t it = 0; it < config.max_newton; ++it) {
    const Eigen::VectorXd eta = h * theta;
    Eigen::VectorXd prob(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      prob(i) = logistic(eta(i));
      w(i) = prob(i) * (1.0 - prob(i));
    }
    const Eigen::VectorXd score = h.transpose() * (y - prob) / n;
    resid = kkt_from_score(score, theta, lambda);
    if (resid <= config.kkt_tol) {
      ok = true;
      break;
    }
    const Eigen::VectorXd grad = -score;
    Eigen::MatrixXd hs = h.transpose() * w.asDiagonal() * h / n;
    hs.diagonal().array() += 1e-12 * std::max(1.0, hs.diagonal().maxCoeff());

    // Coordinate descent on the penalized quadratic model around theta.
    Eigen::VectorXd next = theta;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);  // hs * (next - theta)
    for (std::size_t sweep = 0; sweep < config.max_sweeps; ++sweep) {
      double biggest = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double a = hs(j, j);
        const double old = next(j);
        const double cj = grad(j) + v(j) - a * (old - theta(j));
        const double u = soft_threshold(a * theta(j) - cj, lambda(j)) / a;
        if (u != old) {
          v += hs.col(j) * (u - old);
          next(j) = u;
          biggest = std::max(biggest, a * std::abs(u - old));
        }
      }
      if (biggest < 1e-15) break;
    }

    const Eigen::VectorXd d = next - theta;
    const double f0 = objective(h, y, theta, lambda);
    const double decrease = grad.dot(d) + lambda.dot(next.cwiseAbs()) - lambda.dot(theta.cwiseAbs());
    if (!(decrease < 0.0)) break;  // model offers no descent; resid reports the gap
    double t = 1.0;
    Eigen::VectorXd cand = next;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      cand = theta + t * d;
      if (objective(h, y, cand, lambda) <= f0 + 1e-4 * t * decrease) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    theta = (t == 1.0) ? next : cand;
  }
  if (!ok) resid = lasso_kkt_residual(h, y, theta, penalty, loadings);
  if (kkt) *kkt = resid;
  if (converged) *converged = ok || resid <= config.kkt_tol;
  return theta;
}

LassoCellReport fit_lasso_cell(const Eigen::MatrixXd& h, const Eigen::VectorXd& y,
                               std::optional<std::size_t> intercept, const LassoConfig& config,
                               const LogitOptions& logit) {
  config.validate();
  const auto n_cell = static_cast<std::size_t>(h.rows());
  const auto p = static_cast<std::size_t>(h.cols());
  if (n_cell != static_cast<std::size_t>(y.size())) throw UsageError("lasso design and label lengths differ");
  if (intercept && *intercept >= p) throw UsageError("lasso intercept index out of range");
  for (std::size_t f : config.forced_support) {
    if (f >= p) throw UsageError("forced support index " + std::to_string(f) + " is outside the dictionary");
  }

  LassoCellReport rep;
  rep.penalty = lasso_penalty(n_cell, p, config.c, config.penalty_form);
  rep.theta_lasso = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  const double ybar = y.mean();
  rep.constant_labels = ybar == 0.0 || ybar == 1.0;

  if (!rep.constant_labels) {
    Eigen::VectorXd loadings = initial_loadings(h, y, intercept);
    double kkt = 0.0;
    bool conv = false;
    Eigen::VectorXd theta =
        solve_weighted_lasso_logit(h, y, rep.penalty, loadings, config, Eigen::VectorXd(), &kkt, &conv);
    for (std::size_t k = 1; k <= config.loading_iterations; ++k) {
      const Eigen::VectorXd next_loadings = residual_loadings(h, y, theta, intercept);
      const bool settled = max_relative_change(loadings, next_loadings) < config.loading_tol;
      if (settled) break;
      loadings = next_loadings;
      theta = solve_weighted_lasso_logit(h, y, rep.penalty, loadings, config, theta, &kkt, &conv);
      rep.loading_rounds = k;
    }
    rep.loadings = loadings;
    rep.theta_lasso = theta;
    rep.kkt_residual = kkt;
    rep.converged = conv;
    for (std::size_t j = 0; j < p; ++j) {
      if (intercept && j == *intercept) continue;
      if (theta(static_cast<Eigen::Index>(j)) != 0.0) rep.support.push_back(j);
    }
  } else {
    rep.loadings = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  }

  // Post-selection columns: intercept, forced, then selected by |theta|.
  std::vector<std::size_t> cols;
  auto add = [&cols](std::size_t j) {
    if (std::find(cols.begin(), cols.end(), j) == cols.end()) cols.push_back(j);
  };
  if (intercept) add(*intercept);
  for (std::size_t f : config.forced_support) add(f);
  const std::size_t room = n_cell > 3 ? n_cell - 3 : 1;
  const std::size_t cap = std::max<std::size_t>(std::min(config.max_support_cap, room), cols.size());
  std::vector<std::size_t> ranked = rep.support;
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(rep.theta_lasso(static_cast<Eigen::Index>(a))) >
           std::abs(rep.theta_lasso(static_cast<Eigen::Index>(b)));
  });
  for (std::size_t j : ranked) {
    if (std::find(cols.begin(), cols.end(), j) != cols.end()) continue;
    if (cols.size() >= cap) {
      rep.support_capped = true;
      break;
    }
    cols.push_back(j);
  }
  std::sort(cols.begin(), cols.end());
  rep.post_support = cols;

  rep.theta_post = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  if (!cols.empty()) {
    Eigen::MatrixXd sub(h.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = h.col(static_cast<Eigen::Index>(cols[k]));
    const LogitFit fit = fit_logit_cell(sub, y, 0.0, logit);
    rep.post_separation = fit.separation;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      rep.theta_post(static_cast<Eigen::Index>(cols[k])) = fit.theta(static_cast<Eigen::Index>(k));
    }
  }
  return rep;
}

}  // namespace qte
