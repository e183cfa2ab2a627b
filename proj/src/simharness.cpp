#include "qte/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>

#include "qte/bootstrap.hpp"
#include "qte/error.hpp"
#include "qte/parallel.hpp"

namespace qte {
namespace {

struct TestOutcome {
  bool reject_size = false;
  bool reject_power = false;
  double bias = 0.0;
  double se = 0.0;
};

struct RepOutcome {
  bool ok = false;
  std::string error;
  std::size_t redraws = 0;
  std::size_t degraded = 0;
  std::vector<std::vector<TestOutcome>> by_method;  // [method][test]
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<double> target_pis(const Dataset& data, const SchemeSpec& scheme) {
  std::vector<double> out(data.num_strata());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = scheme.pi(std::stoi(data.label(static_cast<int>(s))));
  return out;
}

const std::vector<std::string> kColumns{"dgp",   "scheme",    "method", "pi_source", "test",      "n",
                                        "reps",  "B",         "completed", "alpha",  "delta",     "size",
                                        "size_mcse", "power", "power_mcse", "mean_bias", "mean_se"};

}  // namespace

std::vector<double> ScenarioSpec::band_grid() const {
  if (!band_taus.empty()) return band_taus;
  std::vector<double> out;
  for (int j = 0; j <= 10; ++j) out.push_back(0.25 + 0.05 * j);
  return out;
}

QuantileGrid ScenarioSpec::estimation_grid() const {
  std::vector<double> all = pointwise_taus;
  if (difference) {
    all.push_back(difference_taus.first);
    all.push_back(difference_taus.second);
  }
  if (uniform) {
    const auto b = band_grid();
    all.insert(all.end(), b.begin(), b.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<double> uniq;
  for (double t : all) {
    if (uniq.empty() || std::abs(t - uniq.back()) > 1e-12) uniq.push_back(t);
  }
  if (uniq.empty()) throw UsageError("scenario has no quantile to test");
  return QuantileGrid(uniq);
}

void ScenarioSpec::validate() const {
  if (reps < 1) throw UsageError("reps must be at least 1");
  if (B < 2) throw UsageError("B must be at least 2");
  if (methods.empty()) throw UsageError("scenario needs at least one method");
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
  if (!(failure_budget >= 0.0)) throw UsageError("failure budget must be nonnegative");
  if (dgp.n < 2) throw UsageError("sample size must be at least 2");
  if (difference && difference_taus.first == difference_taus.second) {
    throw UsageError("difference test needs two distinct tau");
  }
  scheme.validate();
  for (double v : pi_source.values) {
    if (!(v > 0.0 && v < 1.0)) throw UsageError("fixed propensity values must lie in (0,1)");
  }
  (void)estimation_grid();
}

LassoConfig default_lasso_config(DgpKind kind) {
  LassoConfig cfg;
  if (kind == DgpKind::hd) cfg.forced_support = {1};
  return cfg;
}

ScenarioResult run_scenario(const ScenarioSpec& spec) {
  spec.validate();
  const QuantileGrid grid = spec.estimation_grid();
  const std::vector<double> band = spec.uniform ? spec.band_grid() : std::vector<double>{};
  ScenarioResult result;
  result.truth = cached_true_qte(spec.dgp, grid, spec.oracle, spec.truth_cache, spec.threads);
  auto truth_at = [&](double tau) { return result.truth[*grid.index_of(tau)]; };
  const std::size_t tests = spec.pointwise_taus.size() + (spec.difference ? 1 : 0) + (spec.uniform ? 1 : 0);
  std::vector<double> band_truth, band_alt;
  for (double t : band) {
    band_truth.push_back(truth_at(t));
    band_alt.push_back(truth_at(t) + spec.delta);
  }

  std::vector<RepOutcome> reps(spec.reps);
  parallel_for(spec.reps, spec.threads, [&](std::size_t r) {
    RepOutcome& out = reps[r];
    try {
      Rng data_rng = make_rng(spec.seed, {r, 1});
      Rng assign_rng = make_rng(spec.seed, {r, 2});
      const PotentialData pot = generate(spec.dgp, data_rng);
      const std::vector<int> a = assign(pot.s, spec.scheme, assign_rng);
      const Dataset data = pot.observe(a);
      const StrataStats stats = index_strata(data, WeightVector::unit(data.n()), target_pis(data, spec.scheme));
      require_estimable(data, stats);
      spec.pi_source.validate(data.num_strata());
      const PilotQuantiles pilot = pilot_quantiles(data, stats, grid, spec.pi_source);

      BootstrapOptions bo;
      bo.B = spec.B;
      bo.seed = derive_seed(spec.seed, {r, 3});
      bo.pi_source = spec.pi_source;

      for (Method m : spec.methods) {
        AdjustOptions ao = spec.adjust;
        ao.method = m;
        ao.threads = 1;
        const AdjustmentModel model = fit_adjustment(data, stats, pilot, grid, ao);
        out.degraded += model.diagnostics.degraded_cells;
        const QteSolver solver(data, model, spec.pi_source);
        const QteEstimate est = solver.solve(WeightVector::unit(data.n()), stats);
        const BootstrapDraws draws = run_bootstrap(data, stats, solver, bo);
        out.redraws += draws.redraws;

        std::vector<TestOutcome> res;
        for (double t : spec.pointwise_taus) {
          const std::size_t k = *grid.index_of(t);
          const auto col = draws.column(k);
          const double truth = result.truth[k];
          const InferenceResult h0 = pointwise_test(est.qte[k], col, truth, spec.alpha);
          const InferenceResult h1 = pointwise_test(est.qte[k], col, truth + spec.delta, spec.alpha);
          res.push_back({h0.reject, h1.reject, est.qte[k] - truth, h0.se});
        }
        if (spec.difference) {
          const auto [t1, t2] = spec.difference_taus;
          const double truth = truth_at(t1) - truth_at(t2);
          const InferenceResult h0 = difference_test(est, draws, t1, t2, truth, spec.alpha);
          const InferenceResult h1 = difference_test(est, draws, t1, t2, truth + spec.delta, spec.alpha);
          res.push_back({h0.reject, h1.reject, h0.estimate - truth, h0.se});
        }
        if (spec.uniform) {
          const UniformBand h0 = uniform_band(est, draws, band, spec.alpha, band_truth);
          const UniformBand h1 = uniform_band(est, draws, band, spec.alpha, band_alt);
          double bias = 0.0, se = 0.0;
          for (std::size_t j = 0; j < band.size(); ++j) {
            bias += h0.estimate[j] - band_truth[j];
            se += h0.se[j];
          }
          const auto nb = static_cast<double>(band.size());
          res.push_back({h0.reject, h1.reject, bias / nb, se / nb});
        }
        out.by_method.push_back(std::move(res));
      }
      out.ok = true;
    } catch (const DataError& e) {
      out.error = "replication " + std::to_string(r) + ": " + e.what();
    } catch (const NumericalError& e) {
      out.error = "replication " + std::to_string(r) + ": " + e.what();
    }
  });

  result.failure_budget = static_cast<std::size_t>(std::floor(spec.failure_budget * static_cast<double>(spec.reps)));
  std::vector<std::string> test_names;
  for (double t : spec.pointwise_taus) test_names.push_back("pointwise:" + short_num(t));
  if (spec.difference) {
    test_names.push_back("difference:" + short_num(spec.difference_taus.first) + "-" +
                         short_num(spec.difference_taus.second));
  }
  if (spec.uniform) test_names.push_back("uniform:" + short_num(band.front()) + "-" + short_num(band.back()));

  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    for (std::size_t j = 0; j < tests; ++j) {
      ResultRow row;
      row.dgp = to_string(spec.dgp.kind);
      row.scheme = to_string(spec.scheme.kind);
      row.method = to_string(spec.methods[mi]);
      row.pi_source = to_string(spec.pi_source);
      std::replace(row.pi_source.begin(), row.pi_source.end(), ',', ';');
      row.test = test_names[j];
      row.n = spec.dgp.n;
      row.reps = spec.reps;
      row.B = spec.B;
      row.alpha = spec.alpha;
      row.delta = spec.delta;
      std::size_t size_hits = 0, power_hits = 0;
      double bias = 0.0, se = 0.0;
      for (const RepOutcome& rep : reps) {
        if (!rep.ok) continue;
        const TestOutcome& o = rep.by_method[mi][j];
        ++row.completed;
        size_hits += o.reject_size ? 1 : 0;
        power_hits += o.reject_power ? 1 : 0;
        bias += o.bias;
        se += o.se;
      }
      if (row.completed > 0) {
        const auto c = static_cast<double>(row.completed);
        row.size = static_cast<double>(size_hits) / c;
        row.power = static_cast<double>(power_hits) / c;
        row.size_mcse = std::sqrt(row.size * (1.0 - row.size) / c);
        row.power_mcse = std::sqrt(row.power * (1.0 - row.power) / c);
        row.mean_bias = bias / c;
        row.mean_se = se / c;
      }
      result.rows.push_back(row);
    }
  }
  for (const RepOutcome& rep : reps) {
    result.bootstrap_redraws += rep.redraws;
    result.degraded_cells += rep.degraded;
    if (!rep.ok) {
      ++result.failures;
      if (result.failure_messages.size() < 10) result.failure_messages.push_back(rep.error);
    }
  }
  result.budget_exceeded = result.failures > result.failure_budget;
  return result;
}

std::string emit_table(const std::vector<ResultRow>& rows, TableFormat format) {
  std::vector<std::vector<std::string>> cells;
  for (const ResultRow& r : rows) {
    cells.push_back({r.dgp, r.scheme, r.method, r.pi_source, r.test, std::to_string(r.n), std::to_string(r.reps),
                     std::to_string(r.B), std::to_string(r.completed), fmt(r.alpha), fmt(r.delta), fmt(r.size),
                     fmt(r.size_mcse), fmt(r.power), fmt(r.power_mcse), fmt(r.mean_bias), fmt(r.mean_se)});
  }
  std::ostringstream os;
  if (format == TableFormat::csv) {
    for (std::size_t c = 0; c < kColumns.size(); ++c) os << (c ? "," : "") << kColumns[c];
    os << '\n';
    for (const auto& line : cells) {
      for (std::size_t c = 0; c < line.size(); ++c) os << (c ? "," : "") << line[c];
      os << '\n';
    }
    return os.str();
  }
  // Aligned text with rates rounded for reading.
  for (auto& line : cells) {
    for (std::size_t c = 9; c < line.size(); ++c) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", std::stod(line[c]));
      line[c] = buf;
    }
  }
  std::vector<std::size_t> width(kColumns.size());
  for (std::size_t c = 0; c < kColumns.size(); ++c) width[c] = kColumns[c].size();
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  auto put = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) os << "  ";
      os << line[c] << std::string(width[c] - line[c].size(), ' ');
    }
    os << '\n';
  };
  put(kColumns);
  for (const auto& line : cells) put(line);
  return os.str();
}

std::vector<ResultRow> parse_table_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("results table is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
  }
  if (header != kColumns) throw DataError("results table header does not match the expected columns");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != kColumns.size()) throw DataError("results table line " + std::to_string(lineno) + " has the wrong width");
    ResultRow r;
    try {
      r.dgp = f[0];
      r.scheme = f[1];
      r.method = f[2];
      r.pi_source = f[3];
      r.test = f[4];
      r.n = std::stoull(f[5]);
      r.reps = std::stoull(f[6]);
      r.B = std::stoull(f[7]);
      r.completed = std::stoull(f[8]);
      r.alpha = std::stod(f[9]);
      r.delta = std::stod(f[10]);
      r.size = std::stod(f[11]);
      r.size_mcse = std::stod(f[12]);
      r.power = std::stod(f[13]);
      r.power_mcse = std::stod(f[14]);
      r.mean_bias = std::stod(f[15]);
      r.mean_se = std::stod(f[16]);
    } catch (const std::exception&) {
      throw DataError("results table line " + std::to_string(lineno) + " has a malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace qte
