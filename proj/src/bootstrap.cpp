#include "qte/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qte/error.hpp"
#include "qte/numeric.hpp"
#include "qte/parallel.hpp"

namespace qte {
namespace {

bool near_degenerate(const StrataStats& st, double rel) {
  for (std::size_t s = 0; s < st.num_strata(); ++s) {
    const double floor = rel * static_cast<double>(st.n[s]);
    if (st.n1w[s] < floor || st.n0w[s] < floor) return true;
  }
  return false;
}

std::size_t grid_column(const QuantileGrid& grid, double tau) {
  const auto k = grid.index_of(tau);
  if (!k) throw UnfittedTauError("tau " + std::to_string(tau) + " is not in the bootstrap grid");
  return *k;
}

const double kNormalSpread = normal_quantile(0.975) - normal_quantile(0.025);

}  // namespace

WeightVector draw_weights(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> exp1(1.0);
  std::vector<double> w(n);
  for (double& v : w) v = exp1(rng);
  return WeightVector::bootstrap(std::move(w));
}

std::vector<double> BootstrapDraws::column(std::size_t k) const {
  std::vector<double> out(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index b = 0; b < draws.rows(); ++b) out[static_cast<std::size_t>(b)] = draws(b, static_cast<Eigen::Index>(k));
  return out;
}

BootstrapDraws run_bootstrap(const Dataset& data, const StrataStats& stats, const QteSolver& solver,
                             const BootstrapOptions& opt) {
  if (opt.B < 2) throw UsageError("bootstrap needs B >= 2");
  if (stats.num_strata() != data.num_strata()) throw UsageError("stratum statistics do not match the dataset");
  const QuantileGrid& grid = solver.grid();
  BootstrapDraws out{Eigen::MatrixXd(static_cast<Eigen::Index>(opt.B), static_cast<Eigen::Index>(grid.size())),
                     opt.B, grid, 0};
  std::vector<std::size_t> redraws(opt.B, 0);
  const WeightGenerator gen = opt.weight_generator ? opt.weight_generator : WeightGenerator(draw_weights);

  parallel_for(opt.B, opt.threads, [&](std::size_t b) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > opt.max_redraws) {
        throw NumericalError("bootstrap draw " + std::to_string(b) + " stayed degenerate after " +
                             std::to_string(opt.max_redraws) + " redraws");
      }
      Rng rng = make_rng(opt.seed, {b, attempt});
      const WeightVector w = gen(data.n(), rng);
      if (w.size() != data.n()) throw UsageError("weight generator returned the wrong length");
      const StrataStats ws = index_strata(data, w, stats.target_pi);
      if (near_degenerate(ws, opt.degenerate_threshold)) {
        ++redraws[b];
        continue;
      }
      const QteEstimate est = solver.solve(w, ws);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        out.draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = est.qte[k];
      }
      return;
    }
  });
  for (std::size_t r : redraws) out.redraws += r;
  return out;
}

BootstrapDraws run_bootstrap(const Dataset& data, const StrataStats& stats, const AdjustmentModel& model,
                             const QuantileGrid& grid, const BootstrapOptions& opt) {
  if (grid.size() != model.grid().size() ||
      !std::equal(grid.taus().begin(), grid.taus().end(), model.grid().taus().begin())) {
    throw UsageError("adjustment model was fitted on a different quantile grid");
  }
  require_estimable(data, stats);
  const QteSolver solver(data, model, opt.pi_source);
  return run_bootstrap(data, stats, solver, opt);
}

double bootstrap_se(std::span<const double> draws) {
  if (draws.size() < 2) throw UsageError("standard error needs at least two draws");
  std::vector<double> v(draws.begin(), draws.end());
  std::sort(v.begin(), v.end());
  return (sorted_quantile(v, 0.975) - sorted_quantile(v, 0.025)) / kNormalSpread;
}

InferenceResult pointwise_test(double estimate, std::span<const double> draws, double null_value, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
  InferenceResult r;
  r.estimate = estimate;
  r.null_value = null_value;
  r.alpha = alpha;
  r.se = bootstrap_se(draws);
  r.critical_value = normal_quantile(1.0 - alpha / 2.0);
  r.ci_lower = estimate + normal_quantile(alpha / 2.0) * r.se;
  r.ci_upper = estimate + r.critical_value * r.se;
  if (r.se > 0.0) {
    r.statistic = std::abs(estimate - null_value) / r.se;
    r.reject = r.statistic >= r.critical_value;
  } else {
    r.zero_se = true;
    r.ci_lower = r.ci_upper = estimate;
    r.reject = estimate != null_value;
    r.statistic = r.reject ? INFINITY : 0.0;
  }
  return r;
}

InferenceResult difference_test(const QteEstimate& estimate, const BootstrapDraws& draws, double tau1, double tau2,
                                double null_value, double alpha) {
  const std::size_t k1 = grid_column(draws.grid, tau1);
  const std::size_t k2 = grid_column(draws.grid, tau2);
  if (estimate.qte.size() != draws.grid.size()) throw UsageError("estimate and draws use different grids");
  std::vector<double> diff(static_cast<std::size_t>(draws.draws.rows()));
  for (Eigen::Index b = 0; b < draws.draws.rows(); ++b) {
    diff[static_cast<std::size_t>(b)] =
        draws.draws(b, static_cast<Eigen::Index>(k1)) - draws.draws(b, static_cast<Eigen::Index>(k2));
  }
  return pointwise_test(estimate.qte[k1] - estimate.qte[k2], diff, null_value, alpha);
}

UniformBand uniform_band(std::span<const double> taus, std::span<const double> estimate, const Eigen::MatrixXd& draws,
                         double alpha, std::span<const double> null_values) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
  const std::size_t g = estimate.size();
  if (taus.size() != g || static_cast<std::size_t>(draws.cols()) != g) {
    throw UsageError("band estimate, tau and draw columns differ in length");
  }
  if (g == 0) throw UsageError("band needs at least one grid point");
  if (!null_values.empty() && null_values.size() != g) throw UsageError("band null function has the wrong length");
  const auto B = static_cast<std::size_t>(draws.rows());
  if (B < 2) throw UsageError("band needs at least two draws");

  UniformBand band;
  band.alpha = alpha;
  band.taus.assign(taus.begin(), taus.end());
  band.estimate.assign(estimate.begin(), estimate.end());
  std::vector<double> centre(g);
  for (std::size_t k = 0; k < g; ++k) {
    std::vector<double> col(B);
    for (std::size_t b = 0; b < B; ++b) col[b] = draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k));
    std::sort(col.begin(), col.end());
    band.se.push_back((sorted_quantile(col, 0.975) - sorted_quantile(col, 0.025)) / kNormalSpread);
    centre[k] = sorted_quantile(col, 0.5);
    band.included.push_back(band.se.back() > 0.0);
    if (!band.included.back()) {
      band.warnings.push_back("zero bootstrap standard error at tau " + std::to_string(taus[k]) +
                              "; point left out of the uniform band");
    }
  }

  std::vector<double> sup(B, 0.0);
  bool any = false;
  for (std::size_t k = 0; k < g; ++k) {
    if (!band.included[k]) continue;
    any = true;
    for (std::size_t b = 0; b < B; ++b) {
      const double t =
          std::abs(draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) - centre[k]) / band.se[k];
      sup[b] = std::max(sup[b], t);
    }
  }
  if (any) {
    std::sort(sup.begin(), sup.end());
    // Smallest z whose empirical sup-CDF reaches 1 - alpha.
    const auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(B) - 1e-9));
    band.critical_value = sup[std::clamp<std::size_t>(rank, 1, B) - 1];
  }

  for (std::size_t k = 0; k < g; ++k) {
    band.lower.push_back(estimate[k] - band.critical_value * band.se[k]);
    band.upper.push_back(estimate[k] + band.critical_value * band.se[k]);
    if (!null_values.empty() && band.included[k]) {
      if (null_values[k] < band.lower[k] || null_values[k] > band.upper[k]) band.reject = true;
    }
  }
  return band;
}

UniformBand uniform_band(const QteEstimate& estimate, const BootstrapDraws& draws, std::span<const double> taus,
                         double alpha, std::span<const double> null_values) {
  if (estimate.qte.size() != draws.grid.size()) throw UsageError("estimate and draws use different grids");
  Eigen::MatrixXd sub(draws.draws.rows(), static_cast<Eigen::Index>(taus.size()));
  std::vector<double> est(taus.size());
  for (std::size_t j = 0; j < taus.size(); ++j) {
    const std::size_t k = grid_column(draws.grid, taus[j]);
    sub.col(static_cast<Eigen::Index>(j)) = draws.draws.col(static_cast<Eigen::Index>(k));
    est[j] = estimate.qte[k];
  }
  return uniform_band(taus, est, sub, alpha, null_values);
}

}  // namespace qte
