#include "qte/adjust.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "qte/error.hpp"
#include "qte/numeric.hpp"
#include "qte/parallel.hpp"

namespace qte {
namespace {

// Row indices of I_a(s), per arm and stratum.
struct CellIndex {
  std::array<std::vector<std::vector<std::size_t>>, 2> rows;

  CellIndex(const Dataset& data) {
    for (auto& r : rows) r.assign(data.num_strata(), {});
    for (std::size_t i = 0; i < data.n(); ++i) {
      rows[static_cast<std::size_t>(data.a(i))][static_cast<std::size_t>(data.stratum(i))].push_back(i);
    }
  }
  const std::vector<std::size_t>& at(int arm, int s) const {
    return rows[static_cast<std::size_t>(arm)][static_cast<std::size_t>(s)];
  }
};

// Per-cell flags gathered in parallel and reduced in a fixed order.
struct CellEvents {
  bool degraded = false;
  bool singular = false;
  bool separation = false;
  bool nonconverged = false;
  int zero_variance = 0;
  double logit_score = 0.0;
  double lp_residual = 0.0;
  std::optional<LassoCellReport> lasso;
  std::string warning;
};

struct CellTask {
  int arm;
  int stratum;
  std::size_t k;
};

std::vector<CellTask> all_cells(std::size_t num_strata, std::size_t grid_size) {
  std::vector<CellTask> out;
  for (int a = 1; a >= 0; --a) {
    for (std::size_t s = 0; s < num_strata; ++s) {
      for (std::size_t k = 0; k < grid_size; ++k) out.push_back({a, static_cast<int>(s), k});
    }
  }
  return out;
}

std::string cell_label(const Dataset& data, const CellTask& t, const QuantileGrid& grid) {
  std::ostringstream os;
  os << "arm " << t.arm << ", stratum '" << data.label(t.stratum) << "', tau " << grid[t.k];
  return os.str();
}

void check_inputs(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                  const QuantileGrid& grid) {
  if (stats.num_strata() != data.num_strata()) throw UsageError("stratum statistics do not match the dataset");
  require_estimable(data, stats);
  if (pilot.q1.size() != grid.size() || pilot.q0.size() != grid.size()) {
    throw UsageError("pilot quantiles must cover every grid point");
  }
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

Eigen::VectorXd labels_of(const Dataset& data, const std::vector<std::size_t>& idx, double q) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) y(static_cast<Eigen::Index>(r)) = data.y(idx[r]) <= q ? 1.0 : 0.0;
  return y;
}

// Least squares on demeaned regressors, (W'W/n) theta = W'y/n. Minimum-norm
// solution when the Gram matrix is singular.
struct LinearSolve {
  Eigen::VectorXd theta;
  bool singular = false;
  double residual = 0.0;
};

LinearSolve solve_centered(const Eigen::MatrixXd& wc, const Eigen::VectorXd& y, double ridge) {
  const double n = static_cast<double>(wc.rows());
  LinearSolve out;
  if (wc.cols() == 0) {
    out.theta = Eigen::VectorXd();
    return out;
  }
  Eigen::MatrixXd gram = wc.transpose() * wc / n;
  const Eigen::VectorXd rhs = wc.transpose() * y / n;
  gram.diagonal().array() += ridge;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(1e-12);
  cod.compute(gram);
  out.singular = cod.rank() < gram.cols();
  out.theta = cod.solve(rhs);
  out.residual = (rhs - gram * out.theta).lpNorm<Eigen::Infinity>();
  return out;
}

void reduce(AdjustmentModel& model, const std::vector<CellTask>& tasks, const std::vector<CellEvents>& events) {
  auto& d = model.diagnostics;
  d.cells = tasks.size();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& e = events[t];
    d.degraded_cells += e.degraded ? 1 : 0;
    d.singular_gram_cells += e.singular ? 1 : 0;
    d.separation_cells += e.separation ? 1 : 0;
    d.nonconverged_cells += e.nonconverged ? 1 : 0;
    d.zero_variance_columns += static_cast<std::size_t>(e.zero_variance);
    d.max_logit_score = std::max(d.max_logit_score, e.logit_score);
    d.max_lp_residual = std::max(d.max_lp_residual, e.lp_residual);
    if (!e.warning.empty()) d.warnings.push_back(e.warning);
    if (e.lasso) {
      d.lasso_capped_cells += e.lasso->support_capped ? 1 : 0;
      d.lasso_constant_cells += e.lasso->constant_labels ? 1 : 0;
      if (!e.lasso->constant_labels) d.max_kkt_residual = std::max(d.max_kkt_residual, e.lasso->kkt_residual);
      d.lasso.push_back({tasks[t].arm, tasks[t].stratum, tasks[t].k, *e.lasso});
    }
  }
}

CellFit fit_logistic_cell(const Dataset& data, const CellIndex& idx, const Eigen::MatrixXd& design,
                          const PilotQuantiles& pilot, const QuantileGrid& grid, const CellTask& t,
                          const LogitOptions& logit, CellEvents& ev) {
  CellFit fit;
  const auto& rows = idx.at(t.arm, t.stratum);
  fit.n_cell = rows.size();
  const auto p = static_cast<std::size_t>(design.cols());
  if (rows.size() < p + 2) {
    fit.degraded = true;
    ev.degraded = true;
    ev.warning = cell_label(data, t, grid) + ": " + std::to_string(rows.size()) + " units for " +
                 std::to_string(p) + " logistic parameters; adjustment set to zero";
    return fit;
  }
  const LogitFit lf = fit_logit_cell(rows_of(design, rows), labels_of(data, rows, pilot.at(t.arm, t.k)), 0.0, logit);
  fit.rule = CellRule::logistic;
  fit.theta = lf.theta;
  ev.separation = lf.separation;
  ev.nonconverged = !lf.converged;
  if (lf.converged && !lf.separation) ev.logit_score = lf.score_norm;
  return fit;
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "na") return Method::na;
  if (name == "lp") return Method::lp;
  if (name == "ml") return Method::ml;
  if (name == "lpml") return Method::lpml;
  if (name == "mlx") return Method::mlx;
  if (name == "lpmlx") return Method::lpmlx;
  if (name == "np") return Method::np;
  if (name == "lasso" || name == "hd") return Method::hd;
  throw UsageError("unknown adjustment method '" + name + "' (expected na, lp, ml, lpml, mlx, lpmlx, np or lasso)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::na: return "na";
    case Method::lp: return "lp";
    case Method::ml: return "ml";
    case Method::lpml: return "lpml";
    case Method::mlx: return "mlx";
    case Method::lpmlx: return "lpmlx";
    case Method::np: return "np";
    case Method::hd: return "lasso";
  }
  return "?";
}

std::vector<Method> parse_method_list(const std::string& comma_separated) {
  std::vector<Method> out;
  std::stringstream ss(comma_separated);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_method(item));
  }
  if (out.empty()) throw UsageError("method list is empty");
  return out;
}

AdjustmentModel::AdjustmentModel(Method method, FeatureMap features, QuantileGrid grid, std::size_t num_strata)
    : method_(method),
      features_(std::move(features)),
      grid_(std::move(grid)),
      num_strata_(num_strata),
      cells_(2 * num_strata * grid_.size()) {}

std::size_t AdjustmentModel::slot(int arm, int stratum, std::size_t k) const {
  if (arm != 0 && arm != 1) throw UsageError("arm must be 0 or 1");
  if (stratum < 0 || static_cast<std::size_t>(stratum) >= num_strata_) {
    throw UnknownStratumError("stratum id " + std::to_string(stratum) + " was not seen when fitting");
  }
  if (k >= grid_.size()) throw UnfittedTauError("grid index " + std::to_string(k) + " is outside the fitted grid");
  return (static_cast<std::size_t>(arm) * num_strata_ + static_cast<std::size_t>(stratum)) * grid_.size() + k;
}

CellFit& AdjustmentModel::cell(int arm, int stratum, std::size_t k) { return cells_[slot(arm, stratum, k)]; }

const CellFit& AdjustmentModel::cell(int arm, int stratum, std::size_t k) const {
  return cells_[slot(arm, stratum, k)];
}

double AdjustmentModel::evaluate(int arm, double tau, int stratum,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const auto k = grid_.index_of(tau);
  if (!k) throw UnfittedTauError("tau " + std::to_string(tau) + " is not in the fitted grid");
  return evaluate_at(arm, *k, stratum, x);
}

double AdjustmentModel::evaluate_at(int arm, std::size_t k, int stratum,
                                    const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const CellFit& c = cell(arm, stratum, k);
  const double tau = grid_[k];
  if (c.degraded || c.rule == CellRule::zero) return 0.0;
  if (static_cast<std::size_t>(x.size()) != features_.input_dim()) {
    throw UsageError("covariate row width does not match the fitted model");
  }
  const Eigen::VectorXd h = features_.evaluate(x);
  switch (c.rule) {
    case CellRule::linear: return tau - h.dot(c.theta);
    case CellRule::logistic: {
      const double prob = logistic(h.dot(c.theta));
      return literal_hd_evaluation && method_ == Method::hd ? prob : tau - prob;
    }
    case CellRule::lpml: {
      const std::array<double, 2> w{logistic(h.dot(c.theta_ml1)), logistic(h.dot(c.theta_ml0))};
      double fitted = 0.0;
      for (int j = 0; j < 2; ++j) {
        if (c.zero_variance[static_cast<std::size_t>(j)]) continue;
        fitted += c.theta(j) * (w[static_cast<std::size_t>(j)] - c.center(j)) / c.scale(j);
      }
      return tau - fitted;
    }
    case CellRule::zero: break;
  }
  return 0.0;
}

Eigen::VectorXd AdjustmentModel::evaluate_all(const Dataset& data, int arm, std::size_t k) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(data.n()));
  if (method_ == Method::na) {
    out.setZero();
    return out;
  }
  for (std::size_t i = 0; i < data.n(); ++i) {
    out(static_cast<Eigen::Index>(i)) = evaluate_at(arm, k, data.stratum(i), data.x().row(static_cast<Eigen::Index>(i)));
  }
  return out;
}

AdjustmentModel fit_none(const QuantileGrid& grid, std::size_t num_strata, std::size_t dim) {
  AdjustmentModel m(Method::na, FeatureMap::raw(dim, false), grid, num_strata);
  m.diagnostics.cells = 2 * num_strata * grid.size();
  return m;
}

AdjustmentModel fit_lp(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                       const QuantileGrid& grid, const FeatureMap& features, unsigned threads) {
  check_inputs(data, stats, pilot, grid);
  AdjustmentModel model(Method::lp, features, grid, data.num_strata());
  const CellIndex idx(data);
  const Eigen::MatrixXd design = features.design(data.x());
  const auto tasks = all_cells(data.num_strata(), grid.size());
  std::vector<CellEvents> events(tasks.size());

  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    CellFit& fit = model.cell(task.arm, task.stratum, task.k);
    CellEvents& ev = events[t];
    const auto& rows = idx.at(task.arm, task.stratum);
    fit.n_cell = rows.size();
    const auto p = static_cast<std::size_t>(design.cols());
    if (rows.size() < p + 2) {
      fit.degraded = ev.degraded = true;
      ev.warning = cell_label(data, task, grid) + ": " + std::to_string(rows.size()) + " units for " +
                   std::to_string(p) + " linear coefficients; adjustment set to zero";
      return;
    }
    Eigen::MatrixXd w = rows_of(design, rows);
    const Eigen::RowVectorXd mean = w.colwise().mean();
    w.rowwise() -= mean;
    const LinearSolve ls = solve_centered(w, labels_of(data, rows, pilot.at(task.arm, task.k)), 0.0);
    fit.rule = CellRule::linear;
    fit.theta = ls.theta;
    ev.singular = ls.singular;
    ev.lp_residual = ls.residual;
    if (ls.singular) ev.warning = cell_label(data, task, grid) + ": singular Gram matrix, minimum-norm solution used";
  });
  reduce(model, tasks, events);
  return model;
}

AdjustmentModel fit_ml(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                       const QuantileGrid& grid, const FeatureMap& features, const LogitOptions& logit,
                       unsigned threads, Method tag) {
  check_inputs(data, stats, pilot, grid);
  AdjustmentModel model(tag, features, grid, data.num_strata());
  const CellIndex idx(data);
  const Eigen::MatrixXd design = features.design(data.x());
  const auto tasks = all_cells(data.num_strata(), grid.size());
  std::vector<CellEvents> events(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    model.cell(task.arm, task.stratum, task.k) =
        fit_logistic_cell(data, idx, design, pilot, grid, task, logit, events[t]);
  });
  reduce(model, tasks, events);
  return model;
}

AdjustmentModel fit_lpml(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                         const QuantileGrid& grid, const FeatureMap& features, double delta,
                         const LogitOptions& logit, unsigned threads, Method tag) {
  const AdjustmentModel ml = fit_ml(data, stats, pilot, grid, features, logit, threads,
                                    tag == Method::lpmlx ? Method::mlx : Method::ml);
  const double ridge = delta < 0.0 ? 1.0 / static_cast<double>(data.n()) : delta;
  AdjustmentModel model(tag, features, grid, data.num_strata());
  const CellIndex idx(data);
  const Eigen::MatrixXd design = features.design(data.x());
  const auto tasks = all_cells(data.num_strata(), grid.size());
  std::vector<CellEvents> events(tasks.size());

  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    CellFit& fit = model.cell(task.arm, task.stratum, task.k);
    CellEvents& ev = events[t];
    const auto& rows = idx.at(task.arm, task.stratum);
    fit.n_cell = rows.size();
    const CellFit& f1 = ml.cell(1, task.stratum, task.k);
    const CellFit& f0 = ml.cell(0, task.stratum, task.k);
    if (f1.degraded || f0.degraded || rows.size() < 4) {
      fit.degraded = ev.degraded = true;
      ev.warning = cell_label(data, task, grid) + ": logistic inputs unavailable; adjustment set to zero";
      return;
    }
    fit.rule = CellRule::lpml;
    fit.theta_ml1 = f1.theta;
    fit.theta_ml0 = f0.theta;
    const auto nr = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd w(nr, 2);
    for (Eigen::Index r = 0; r < nr; ++r) {
      const Eigen::VectorXd h = design.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)])).transpose();
      w(r, 0) = logistic(h.dot(f1.theta));
      w(r, 1) = logistic(h.dot(f0.theta));
    }
    std::vector<Eigen::Index> live;
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double mean = w.col(j).mean();
      const double sd = std::sqrt((w.col(j).array() - mean).square().mean());
      fit.center(j) = mean;
      if (!(sd > 1e-10)) {
        fit.zero_variance[static_cast<std::size_t>(j)] = true;
        ++ev.zero_variance;
        continue;
      }
      fit.scale(j) = sd;
      live.push_back(j);
    }
    Eigen::MatrixXd z(nr, static_cast<Eigen::Index>(live.size()));
    for (std::size_t c = 0; c < live.size(); ++c) {
      const Eigen::Index j = live[c];
      z.col(static_cast<Eigen::Index>(c)) = (w.col(j).array() - fit.center(j)) / fit.scale(j);
    }
    const LinearSolve ls = solve_centered(z, labels_of(data, rows, pilot.at(task.arm, task.k)), ridge);
    fit.theta = Eigen::VectorXd::Zero(2);
    for (std::size_t c = 0; c < live.size(); ++c) fit.theta(live[c]) = ls.theta(static_cast<Eigen::Index>(c));
    ev.singular = ls.singular;
    ev.lp_residual = ls.residual;
  });
  reduce(model, tasks, events);
  // Carry the first-stage logistic diagnostics.
  auto& d = model.diagnostics;
  d.separation_cells += ml.diagnostics.separation_cells;
  d.nonconverged_cells += ml.diagnostics.nonconverged_cells;
  d.max_logit_score = std::max(d.max_logit_score, ml.diagnostics.max_logit_score);
  d.warnings.insert(d.warnings.begin(), ml.diagnostics.warnings.begin(), ml.diagnostics.warnings.end());
  return model;
}

AdjustmentModel fit_np(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                       const QuantileGrid& grid, const FeatureMap& sieve_map, const LogitOptions& logit,
                       unsigned threads) {
  check_inputs(data, stats, pilot, grid);
  const CellIndex idx(data);
  for (int a = 0; a <= 1; ++a) {
    for (std::size_t s = 0; s < data.num_strata(); ++s) {
      const auto n_cell = idx.at(a, static_cast<int>(s)).size();
      if (sieve_map.size() > n_cell) {
        throw CellTooSmallError("sieve has " + std::to_string(sieve_map.size()) + " terms but arm " +
                                std::to_string(a) + " of stratum '" + data.label(static_cast<int>(s)) + "' has " +
                                std::to_string(n_cell) + " units");
      }
    }
  }
  return fit_ml(data, stats, pilot, grid, sieve_map, logit, threads, Method::np);
}

AdjustmentModel fit_hd_lasso(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                             const QuantileGrid& grid, const FeatureMap& dictionary, const LassoConfig& config,
                             const LogitOptions& logit, unsigned threads) {
  check_inputs(data, stats, pilot, grid);
  config.validate();
  AdjustmentModel model(Method::hd, dictionary, grid, data.num_strata());
  const CellIndex idx(data);
  const Eigen::MatrixXd design = dictionary.design(data.x());
  const std::optional<std::size_t> intercept =
      dictionary.has_intercept() ? std::optional<std::size_t>(dictionary.intercept_index()) : std::nullopt;
  std::size_t kept = intercept ? 1 : 0;
  for (std::size_t f : config.forced_support) kept += (intercept && f == *intercept) ? 0 : 1;
  const auto tasks = all_cells(data.num_strata(), grid.size());
  std::vector<CellEvents> events(tasks.size());

  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    CellFit& fit = model.cell(task.arm, task.stratum, task.k);
    CellEvents& ev = events[t];
    const auto& rows = idx.at(task.arm, task.stratum);
    fit.n_cell = rows.size();
    if (rows.size() < std::max<std::size_t>(kept + 2, 3)) {
      fit.degraded = ev.degraded = true;
      ev.warning = cell_label(data, task, grid) + ": too few units for the penalized fit; adjustment set to zero";
      return;
    }
    LassoCellReport rep = fit_lasso_cell(rows_of(design, rows), labels_of(data, rows, pilot.at(task.arm, task.k)),
                                         intercept, config, logit);
    fit.rule = CellRule::logistic;
    fit.theta = rep.theta_post;
    ev.separation = rep.post_separation;
    ev.nonconverged = !rep.converged && !rep.constant_labels;
    ev.lasso = std::move(rep);
  });
  reduce(model, tasks, events);
  return model;
}

FeatureMap default_features(Method method, const Dataset& data, const SieveSpec& sieve) {
  const std::size_t d = data.dim();
  switch (method) {
    case Method::na: return FeatureMap::raw(d, false);
    case Method::lp: return FeatureMap::raw(d, false);
    case Method::ml:
    case Method::lpml: return FeatureMap::raw(d, true);
    case Method::mlx:
    case Method::lpmlx: return FeatureMap::with_interactions(d);
    case Method::np: return build_sieve_map(data.x(), sieve);
    case Method::hd: return FeatureMap::hd_dictionary(d);
  }
  return FeatureMap::raw(d, false);
}

AdjustmentModel fit_adjustment(const Dataset& data, const StrataStats& stats, const PilotQuantiles& pilot,
                               const QuantileGrid& grid, const AdjustOptions& options) {
  if (options.method != Method::na && data.dim() == 0) {
    throw UsageError("method '" + to_string(options.method) + "' needs at least one covariate column");
  }
  const FeatureMap features = options.features ? *options.features : default_features(options.method, data, options.sieve);
  const unsigned th = options.threads;
  switch (options.method) {
    case Method::na: {
      check_inputs(data, stats, pilot, grid);
      return fit_none(grid, data.num_strata(), data.dim());
    }
    case Method::lp: return fit_lp(data, stats, pilot, grid, features, th);
    case Method::ml: return fit_ml(data, stats, pilot, grid, features, options.logit, th, Method::ml);
    case Method::mlx: return fit_ml(data, stats, pilot, grid, features, options.logit, th, Method::mlx);
    case Method::lpml:
    case Method::lpmlx:
      return fit_lpml(data, stats, pilot, grid, features, options.lpml_delta.value_or(-1.0), options.logit, th,
                      options.method);
    case Method::np: return fit_np(data, stats, pilot, grid, features, options.logit, th);
    case Method::hd: {
      AdjustmentModel m = fit_hd_lasso(data, stats, pilot, grid, features, options.lasso, options.logit, th);
      m.literal_hd_evaluation = options.literal_hd_evaluation;
      return m;
    }
  }
  throw UsageError("unhandled adjustment method");
}

std::size_t count_cdf_crossings(const AdjustmentModel& model, const Dataset& data) {
  const auto& grid = model.grid();
  if (grid.size() < 2 || model.method() == Method::na) return 0;
  std::size_t crossings = 0;
  for (int a = 0; a <= 1; ++a) {
    for (std::size_t i = 0; i < data.n(); ++i) {
      const auto row = data.x().row(static_cast<Eigen::Index>(i));
      double prev = grid[0] - model.evaluate_at(a, 0, data.stratum(i), row);
      for (std::size_t k = 1; k < grid.size(); ++k) {
        const double cur = grid[k] - model.evaluate_at(a, k, data.stratum(i), row);
        if (cur < prev - 1e-12) {
          ++crossings;
          break;
        }
        prev = cur;
      }
    }
  }
  return crossings;
}

}  // namespace qte
