#include "qte/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "qte/error.hpp"
#include "qte/numeric.hpp"

namespace qte {
namespace {

struct Sweep {
  const std::vector<double>& y;
  const std::vector<int>& a;
  const std::vector<int>& s;
  const std::vector<double>& w;
  const std::vector<double>& pi;  // per stratum
};

// Right-derivative threshold T of the arm-a objective, with the adjustment
// sum accumulated per stratum so that per-stratum shifts of m cancel
// before division.
double threshold(const Sweep& sw, int arm, double tau, const double* m, std::size_t stride, double total) {
  std::vector<CompensatedSum> by_stratum(sw.pi.size());
  for (std::size_t i = 0; i < sw.y.size(); ++i) {
    const double d = sw.w[i] * (static_cast<double>(sw.a[i]) - sw.pi[static_cast<std::size_t>(sw.s[i])]);
    by_stratum[static_cast<std::size_t>(sw.s[i])].add(d * m[i * stride]);
  }
  CompensatedSum adj;
  for (std::size_t s = 0; s < sw.pi.size(); ++s) {
    adj.add(by_stratum[s].value() / (arm == 1 ? sw.pi[s] : 1.0 - sw.pi[s]));
  }
  return arm == 1 ? tau * total - adj.value() : tau * total + adj.value();
}

double unit_mass(const Sweep& sw, int arm, std::size_t i) {
  const double p = sw.pi[static_cast<std::size_t>(sw.s[i])];
  return arm == 1 ? sw.w[i] / p : sw.w[i] / (1.0 - p);
}

double sweep(const Sweep& sw, int arm, double tau, const double* m, std::size_t stride,
             const std::vector<std::size_t>& order, const std::vector<std::size_t>& group_end) {
  if (order.empty()) throw DataError("arm " + std::to_string(arm) + " has no units");
  CompensatedSum tot;
  for (std::size_t i : order) tot.add(unit_mass(sw, arm, i));
  const double total = tot.value();
  const double target = threshold(sw, arm, tau, m, stride, total);
  const double tol = 1e-10 * std::max(1.0, total);
  CompensatedSum cum;
  std::size_t begin = 0;
  for (std::size_t end : group_end) {
    for (std::size_t r = begin; r < end; ++r) cum.add(unit_mass(sw, arm, order[r]));
    if (cum.value() >= target - tol) return sw.y[order[begin]];
    begin = end;
  }
  return sw.y[order.back()];
}

void sorted_groups(const std::vector<double>& y, const std::vector<int>& a, int arm, std::vector<std::size_t>& order,
                   std::vector<std::size_t>& group_end) {
  order.clear();
  group_end.clear();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (a[i] == arm) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return y[l] < y[r]; });
  for (std::size_t r = 1; r <= order.size(); ++r) {
    if (r == order.size() || y[order[r]] != y[order[r - 1]]) group_end.push_back(r);
  }
}

std::vector<double> stratum_pis(const PiSource& src, const StrataStats& stats) {
  std::vector<double> out(stats.num_strata());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = src.pi(stats, static_cast<int>(s));
  return out;
}

void check_stats(const Dataset& data, const StrataStats& stats, const WeightVector& weights) {
  if (weights.size() != data.n()) throw UsageError("weight vector length does not match dataset");
  if (stats.num_strata() != data.num_strata()) throw UsageError("stratum statistics do not match the dataset");
  require_estimable(data, stats);
}

}  // namespace

double PiSource::pi(const StrataStats& stats, int stratum) const {
  const auto s = static_cast<std::size_t>(stratum);
  if (mode == Mode::estimated) return stats.pi_hat_w.at(s);
  return values.size() == 1 ? values[0] : values.at(s);
}

void PiSource::validate(std::size_t num_strata) const {
  if (mode == Mode::estimated) return;
  if (values.size() != 1 && values.size() != num_strata) {
    throw UsageError("fixed propensity needs one value or one per stratum (" + std::to_string(num_strata) + ")");
  }
  for (double v : values) {
    if (!(v > 0.0 && v < 1.0)) throw UsageError("fixed propensity values must lie in (0,1)");
  }
}

PiSource parse_pi_source(const std::string& text) {
  if (text == "estimated") return PiSource::estimated();
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) != 0) throw UsageError("pi source must be 'estimated' or 'fixed:<value>[,<value>...]'");
  std::vector<double> vals;
  std::stringstream ss(text.substr(prefix.size()));
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("bad fixed propensity value '" + item + "'");
    vals.push_back(v);
  }
  if (vals.empty()) throw UsageError("fixed propensity needs at least one value");
  PiSource out = PiSource::fixed(std::move(vals));
  for (double v : out.values) {
    if (!(v > 0.0 && v < 1.0)) throw UsageError("fixed propensity values must lie in (0,1)");
  }
  return out;
}

std::string to_string(const PiSource& source) {
  if (!source.is_fixed()) return "estimated";
  std::ostringstream os;
  os.precision(17);
  os << "fixed:";
  for (std::size_t i = 0; i < source.values.size(); ++i) os << (i ? "," : "") << source.values[i];
  return os.str();
}

double solve_arm_quantile(const ArmQuantileProblem& p, const Dataset& data, const StrataStats& stats) {
  if (p.arm != 0 && p.arm != 1) throw UsageError("arm must be 0 or 1");
  if (!(p.tau > 0.0 && p.tau < 1.0)) throw UsageError("tau must lie in (0,1)");
  if (static_cast<std::size_t>(p.mhat_values.size()) != data.n()) throw UsageError("m-hat length does not match dataset");
  check_stats(data, stats, p.weights);
  p.pi_source.validate(data.num_strata());
  const std::vector<double> y(data.y().data(), data.y().data() + data.n());
  const std::vector<double> pis = stratum_pis(p.pi_source, stats);
  std::vector<std::size_t> order, ends;
  sorted_groups(y, data.a(), p.arm, order, ends);
  const Sweep sw{y, data.a(), data.strata(), p.weights.w, pis};
  return sweep(sw, p.arm, p.tau, p.mhat_values.data(), 1, order, ends);
}

QteSolver::QteSolver(const Dataset& data, const AdjustmentModel& model, PiSource pi_source)
    : grid_(model.grid()), pi_source_(std::move(pi_source)) {
  if (model.num_strata() != data.num_strata()) throw UsageError("adjustment model was fitted on different strata");
  prepare(data);
  for (int arm = 0; arm <= 1; ++arm) {
    auto& c = arms_[static_cast<std::size_t>(arm)];
    // Unit-major storage so that one grid point is a strided walk.
    c.mhat.resize(static_cast<Eigen::Index>(grid_.size()), static_cast<Eigen::Index>(data.n()));
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      c.mhat.row(static_cast<Eigen::Index>(k)) = model.evaluate_all(data, arm, k).transpose();
    }
  }
}

QteSolver::QteSolver(const Dataset& data, QuantileGrid grid, const Eigen::MatrixXd& mhat1,
                     const Eigen::MatrixXd& mhat0, PiSource pi_source)
    : grid_(std::move(grid)), pi_source_(std::move(pi_source)) {
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto g = static_cast<Eigen::Index>(grid_.size());
  if (mhat1.rows() != n || mhat0.rows() != n || mhat1.cols() != g || mhat0.cols() != g) {
    throw UsageError("m-hat matrices must be n x grid");
  }
  prepare(data);
  arms_[1].mhat = mhat1.transpose();
  arms_[0].mhat = mhat0.transpose();
}

void QteSolver::prepare(const Dataset& data) {
  pi_source_.validate(data.num_strata());
  y_.assign(data.y().data(), data.y().data() + data.n());
  a_ = data.a();
  s_ = data.strata();
  for (int arm = 0; arm <= 1; ++arm) {
    auto& c = arms_[static_cast<std::size_t>(arm)];
    sorted_groups(y_, a_, arm, c.order, c.group_end);
  }
}

double QteSolver::solve_arm(int arm, std::size_t k, const WeightVector& weights, const StrataStats& stats) const {
  if (weights.size() != n()) throw UsageError("weight vector length does not match dataset");
  const auto& c = arms_[static_cast<std::size_t>(arm)];
  const std::vector<double> pis = stratum_pis(pi_source_, stats);
  const Sweep sw{y_, a_, s_, weights.w, pis};
  return sweep(sw, arm, grid_[k], c.mhat.data() + k, static_cast<std::size_t>(c.mhat.rows()), c.order, c.group_end);
}

QteEstimate QteSolver::solve(const WeightVector& weights, const StrataStats& stats) const {
  if (weights.size() != n()) throw UsageError("weight vector length does not match dataset");
  QteEstimate out;
  out.taus.assign(grid_.taus().begin(), grid_.taus().end());
  const std::vector<double> pis = stratum_pis(pi_source_, stats);
  const Sweep sw{y_, a_, s_, weights.w, pis};
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    double q[2];
    for (int arm = 0; arm <= 1; ++arm) {
      const auto& c = arms_[static_cast<std::size_t>(arm)];
      q[arm] = sweep(sw, arm, grid_[k], c.mhat.data() + k, static_cast<std::size_t>(c.mhat.rows()), c.order,
                     c.group_end);
    }
    out.q1.push_back(q[1]);
    out.q0.push_back(q[0]);
    out.qte.push_back(q[1] - q[0]);
  }
  return out;
}

QteEstimate estimate_qte(const Dataset& data, const StrataStats& stats, const AdjustmentModel& model, const QuantileGrid& grid,
                const WeightVector& weights, const PiSource& pi_source) {
  if (grid.size() != model.grid().size() ||
      !std::equal(grid.taus().begin(), grid.taus().end(), model.grid().taus().begin())) {
    throw UsageError("adjustment model was fitted on a different quantile grid");
  }
  check_stats(data, stats, weights);
  return QteSolver(data, model, pi_source).solve(weights, stats);
}

PilotQuantiles pilot_quantiles(const Dataset& data, const StrataStats& stats, const QuantileGrid& grid,
                               const PiSource& pi_source) {
  const AdjustmentModel none = fit_none(grid, data.num_strata(), data.dim());
  const QteEstimate est = estimate_qte(data, stats, none, grid, WeightVector::unit(data.n()), pi_source);
  return {est.q1, est.q0};
}

}  // namespace qte
