#include "qte/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qte/adjust.hpp"
#include "qte/bootstrap.hpp"
#include "qte/csv.hpp"
#include "qte/error.hpp"
#include "qte/estimator.hpp"
#include "qte/parallel.hpp"
#include "qte/simharness.hpp"

#ifndef QTE_VERSION
#define QTE_VERSION "0.0.0"
#endif

namespace qte {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

unsigned resolve_threads(unsigned requested) { return requested ? requested : default_thread_count(); }

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) throw UsageError("bad " + what + " '" + s + "'");
  return v;
}

std::pair<double, double> parse_pair(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError("difference test needs 'tau1,tau2' (got '" + text + "')");
  return {parse_number(text.substr(0, comma), "tau"), parse_number(text.substr(comma + 1), "tau")};
}

SieveSpec sieve_from(const RunConfig& cfg) {
  SieveSpec s;
  if (cfg.sieve_basis == "polynomial") {
    s.basis = SieveSpec::Basis::polynomial;
  } else if (cfg.sieve_basis == "spline") {
    s.basis = SieveSpec::Basis::spline;
  } else if (cfg.sieve_basis == "interaction") {
    s.basis = SieveSpec::Basis::interaction_threshold;
  } else {
    throw UsageError("unknown sieve basis '" + cfg.sieve_basis + "' (expected interaction, polynomial or spline)");
  }
  s.order = cfg.sieve_order;
  s.knots = cfg.sieve_knots;
  s.tensor = !cfg.sieve_additive;
  return s;
}

LassoConfig lasso_from(const RunConfig& cfg, const LassoConfig& base) {
  LassoConfig l = base;
  l.c = cfg.lasso_c;
  l.loading_iterations = cfg.lasso_k;
  if (cfg.lasso_penalty == "implementation") {
    l.penalty_form = PenaltyForm::implementation;
  } else if (cfg.lasso_penalty == "theory") {
    l.penalty_form = PenaltyForm::theory;
  } else {
    throw UsageError("unknown lasso penalty form '" + cfg.lasso_penalty + "' (expected implementation or theory)");
  }
  if (cfg.forced_support_set) l.forced_support = cfg.forced_support;
  l.validate();
  return l;
}

AdjustOptions adjust_from(const RunConfig& cfg, const LassoConfig& base) {
  AdjustOptions o;
  o.sieve = sieve_from(cfg);
  o.lasso = lasso_from(cfg, base);
  o.lpml_delta = cfg.lpml_delta;
  if (o.lpml_delta && *o.lpml_delta < 0.0) throw UsageError("lpml ridge delta must be nonnegative");
  o.literal_hd_evaluation = cfg.literal_hd;
  o.threads = resolve_threads(cfg.threads);
  return o;
}

// Everything that determines the output; thread count is excluded because
// results do not depend on it.
ordered_json config_echo(const RunConfig& c) {
  ordered_json j;
  j["command"] = c.command;
  if (c.command == "estimate") {
    j["input"] = c.input;
    j["method"] = c.method;
    j["taus"] = c.taus;
    j["target_pi"] = c.target_pi;
    j["null"] = c.null_value;
    j["difference"] = c.difference;
    j["band"] = c.band;
  } else {
    j["dgp"] = c.dgp;
    j["scheme"] = c.scheme;
    j["methods"] = c.methods;
    j["n"] = c.n;
    j["reps"] = c.reps;
    j["taus"] = c.taus;
    j["difference"] = c.difference.empty() ? std::string("0.75,0.25") : c.difference;
    j["band_taus"] = c.band_taus;
    j["no_difference"] = c.no_difference;
    j["no_band"] = c.no_band;
    j["delta"] = c.delta;
    j["gamma"] = c.gamma;
    j["bcd_lambda"] = c.bcd_lambda;
    j["target_pi"] = c.target_pi;
    j["oracle"] = {{"mc_n", c.oracle_n}, {"mc_reps", c.oracle_reps}, {"seed", c.oracle_seed}};
    j["failure_budget"] = c.failure_budget;
    j["full"] = c.full;
  }
  j["B"] = c.B;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  j["pi_source"] = c.pi_source;
  j["lpml_delta"] = c.lpml_delta ? json(*c.lpml_delta) : json(nullptr);
  j["sieve"] = {{"basis", c.sieve_basis}, {"order", c.sieve_order}, {"knots", c.sieve_knots}, {"additive", c.sieve_additive}};
  j["lasso"] = {{"c", c.lasso_c}, {"K", c.lasso_k}, {"penalty", c.lasso_penalty}, {"literal_evaluation", c.literal_hd}};
  if (c.forced_support_set) j["lasso"]["forced_support"] = c.forced_support;
  return j;
}

ordered_json diagnostics_json(const FitDiagnostics& d, std::size_t crossings, std::size_t redraws) {
  ordered_json j;
  j["cells"] = d.cells;
  j["degraded_cells"] = d.degraded_cells;
  j["singular_gram_cells"] = d.singular_gram_cells;
  j["separation_cells"] = d.separation_cells;
  j["nonconverged_cells"] = d.nonconverged_cells;
  j["zero_variance_columns"] = d.zero_variance_columns;
  j["lasso_capped_cells"] = d.lasso_capped_cells;
  j["lasso_constant_cells"] = d.lasso_constant_cells;
  j["max_logit_score"] = d.max_logit_score;
  j["max_lp_residual"] = d.max_lp_residual;
  j["max_kkt_residual"] = d.max_kkt_residual;
  j["cdf_crossings"] = crossings;
  j["bootstrap_redraws"] = redraws;
  return j;
}

ordered_json inference_json(const InferenceResult& r) {
  ordered_json j;
  j["estimate"] = r.estimate;
  j["se"] = r.se;
  j["ci"] = {r.ci_lower, r.ci_upper};
  j["null"] = r.null_value;
  j["statistic"] = std::isfinite(r.statistic) ? json(r.statistic) : json(nullptr);
  j["reject"] = r.reject;
  j["alpha"] = r.alpha;
  j["zero_se"] = r.zero_se;
  return j;
}

void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open output file '" + path + "'");
  f << text;
  if (!f) throw std::ios_base::failure("failed writing output file '" + path + "'");
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const DegenerateCellError& e) {
    err << "degenerate stratum: " << e.what() << '\n';
    return exit_degenerate;
  } catch (const EmptyStratumError& e) {
    err << "degenerate stratum: " << e.what() << '\n';
    return exit_degenerate;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return exit_data;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::ios_base::failure& e) {
    err << "io error: " << e.what() << '\n';
    return exit_io;
  }
}

}  // namespace

std::vector<double> parse_tau_list(const std::string& text) {
  if (text.empty()) throw UsageError("tau list is empty");
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(parse_number(item, "tau range"));
    if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0]) {
      throw UsageError("tau range must be first:step:last with a positive step (got '" + text + "')");
    }
    const auto count = static_cast<std::size_t>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9)) + 1;
    for (std::size_t j = 0; j < count; ++j) {
      // Round to 12 decimals so that 0.25 + 6*0.05 prints and matches as 0.55.
      out.push_back(std::round((parts[0] + parts[1] * static_cast<double>(j)) * 1e12) / 1e12);
    }
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(item, "tau"));
  return out;
}

int cmd_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.input.empty()) throw UsageError("estimate needs an input CSV file");
    if (cfg.B < 2) throw UsageError("B must be at least 2");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
    if (!(cfg.target_pi > 0.0 && cfg.target_pi < 1.0)) throw UsageError("target fraction must lie in (0,1)");
    const Method method = parse_method(cfg.method);
    const PiSource pi = parse_pi_source(cfg.pi_source);
    AdjustOptions ao = adjust_from(cfg, LassoConfig{});
    ao.method = method;

    std::vector<double> taus = parse_tau_list(cfg.taus);
    std::optional<std::pair<double, double>> diff;
    if (!cfg.difference.empty()) {
      diff = parse_pair(cfg.difference);
      taus.push_back(diff->first);
      taus.push_back(diff->second);
    }
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end(), [](double l, double r) { return std::abs(l - r) <= 1e-12; }),
               taus.end());
    const QuantileGrid grid(taus);

    const Dataset data = read_dataset_csv(cfg.input);
    pi.validate(data.num_strata());
    const StrataStats stats = index_strata(data, WeightVector::unit(data.n()), cfg.target_pi);
    require_estimable(data, stats);

    const PilotQuantiles pilot = pilot_quantiles(data, stats, grid, pi);
    const AdjustmentModel model = fit_adjustment(data, stats, pilot, grid, ao);
    const QteSolver solver(data, model, pi);
    const QteEstimate est = solver.solve(WeightVector::unit(data.n()), stats);
    BootstrapOptions bo;
    bo.B = cfg.B;
    bo.seed = cfg.seed;
    bo.threads = resolve_threads(cfg.threads);
    bo.pi_source = pi;
    const BootstrapDraws draws = run_bootstrap(data, stats, solver, bo);

    ordered_json rep;
    rep["schema_version"] = kSchemaVersion;
    rep["library_version"] = QTE_VERSION;
    rep["config"] = config_echo(cfg);
    ordered_json strata = ordered_json::array();
    for (std::size_t s = 0; s < data.num_strata(); ++s) {
      strata.push_back({{"label", data.label(static_cast<int>(s))},
                        {"n", stats.n[s]},
                        {"n1", stats.n1[s]},
                        {"n0", stats.n0[s]},
                        {"pi_hat", stats.pi_hat[s]}});
    }
    rep["data"] = {{"n", data.n()}, {"covariates", data.covariate_names()}, {"strata", strata}};
    rep["method"] = to_string(method);
    rep["pi_source"] = to_string(pi);
    rep["B"] = cfg.B;
    rep["seed"] = cfg.seed;
    ordered_json results = ordered_json::array();
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const InferenceResult r = pointwise_test(est.qte[k], draws.column(k), cfg.null_value, cfg.alpha);
      ordered_json row;
      row["tau"] = grid[k];
      row["q1"] = est.q1[k];
      row["q0"] = est.q0[k];
      row.update(inference_json(r));
      results.push_back(row);
    }
    rep["results"] = results;
    if (diff) {
      ordered_json d = inference_json(difference_test(est, draws, diff->first, diff->second, cfg.null_value, cfg.alpha));
      d["tau1"] = diff->first;
      d["tau2"] = diff->second;
      rep["difference"] = d;
    }
    std::vector<std::string> warnings = model.diagnostics.warnings;
    if (cfg.band) {
      const std::vector<double> nulls(grid.size(), cfg.null_value);
      const UniformBand b = uniform_band(est, draws, grid.taus(), cfg.alpha, nulls);
      ordered_json bj;
      bj["tau"] = b.taus;
      bj["estimate"] = b.estimate;
      bj["se"] = b.se;
      bj["lower"] = b.lower;
      bj["upper"] = b.upper;
      bj["included"] = b.included;
      bj["critical_value"] = b.critical_value;
      bj["null"] = cfg.null_value;
      bj["reject"] = b.reject;
      bj["alpha"] = b.alpha;
      rep["uniform_band"] = bj;
      warnings.insert(warnings.end(), b.warnings.begin(), b.warnings.end());
    }
    rep["diagnostics"] = diagnostics_json(model.diagnostics, count_cdf_crossings(model, data), draws.redraws);
    rep["warnings"] = warnings;
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    write_text(cfg.out, rep.dump(2) + "\n", out);
    return static_cast<int>(exit_ok);
  });
}

int cmd_simulate(const RunConfig& cfg_in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = cfg_in;
    if (cfg.full) {
      cfg.reps = 10000;
      cfg.B = 1000;
    }
    ScenarioSpec spec;
    spec.dgp.kind = parse_dgp(cfg.dgp);
    spec.dgp.n = cfg.n;
    spec.dgp.gamma = cfg.gamma;
    spec.scheme.kind = parse_scheme(cfg.scheme);
    spec.scheme.default_pi = cfg.target_pi;
    spec.scheme.lambda = cfg.bcd_lambda;
    spec.methods = parse_method_list(cfg.methods);
    spec.reps = cfg.reps;
    spec.B = cfg.B;
    spec.pointwise_taus = parse_tau_list(cfg.taus);
    spec.difference = !cfg.no_difference;
    if (!cfg.difference.empty()) spec.difference_taus = parse_pair(cfg.difference);
    spec.uniform = !cfg.no_band;
    spec.band_taus = parse_tau_list(cfg.band_taus);
    spec.delta = cfg.delta;
    spec.alpha = cfg.alpha;
    spec.seed = cfg.seed;
    spec.pi_source = parse_pi_source(cfg.pi_source);
    spec.adjust = adjust_from(cfg, default_lasso_config(spec.dgp.kind));
    spec.oracle = {cfg.oracle_n, cfg.oracle_reps, cfg.oracle_seed};
    spec.threads = resolve_threads(cfg.threads);
    spec.failure_budget = cfg.failure_budget;
    std::optional<TruthCache> cache;
    if (!cfg.truth_cache.empty()) {
      cache.emplace(cfg.truth_cache);
      spec.truth_cache = &*cache;
    }
    TableFormat fmt = TableFormat::csv;
    if (cfg.format == "text") {
      fmt = TableFormat::text;
    } else if (cfg.format != "csv") {
      throw UsageError("unknown table format '" + cfg.format + "' (expected csv or text)");
    }

    const ScenarioResult res = run_scenario(spec);
    if (cache) cache->save();
    write_text(cfg.out, emit_table(res.rows, fmt), out);
    if (!cfg.out.empty()) {
      ordered_json side;
      side["schema_version"] = kSchemaVersion;
      side["library_version"] = QTE_VERSION;
      side["config"] = config_echo(cfg);
      side["seed"] = cfg.seed;
      const QuantileGrid grid = spec.estimation_grid();
      side["truth"] = {{"tau", std::vector<double>(grid.taus().begin(), grid.taus().end())}, {"qte", res.truth}};
      side["failures"] = res.failures;
      side["failure_budget"] = res.failure_budget;
      side["failure_messages"] = res.failure_messages;
      side["bootstrap_redraws"] = res.bootstrap_redraws;
      side["degraded_cells"] = res.degraded_cells;
      write_text(cfg.out + ".config.json", side.dump(2) + "\n", out);
    }
    for (const auto& m : res.failure_messages) err << "warning: " << m << '\n';
    if (res.budget_exceeded) {
      err << "numerical failure: " << res.failures << " of " << spec.reps
          << " replications failed, above the budget of " << res.failure_budget << '\n';
      return static_cast<int>(exit_numerical);
    }
    return static_cast<int>(exit_ok);
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regression-adjusted quantile treatment effects under covariate-adaptive randomization", "qte"};
  app.set_version_flag("--version", std::string(QTE_VERSION));
  app.set_config("--config", "", "TOML or INI file; sections [estimate] / [simulate]; flags win");
  app.require_subcommand(1);
  app.fallthrough();
  RunConfig cfg;

  auto add_common = [&cfg](CLI::App* sub) {
    sub->add_option("--taus", cfg.taus, "Quantile indices: comma list or first:step:last");
    sub->add_option("--B", cfg.B, "Bootstrap draws");
    sub->add_option("--alpha", cfg.alpha, "Significance level");
    sub->add_option("--seed", cfg.seed, "Master seed");
    sub->add_option("--pi", cfg.pi_source, "Propensity: estimated | fixed:<p>[,<p>...]");
    sub->add_option("--out", cfg.out, "Output path (default stdout)");
    sub->add_option("--threads", cfg.threads, "Worker threads (default QTE_THREADS or hardware)");
    sub->add_option("--target-pi", cfg.target_pi, "Target treated fraction");
    sub->add_option("--difference", cfg.difference, "Difference test 'tau1,tau2'");
    sub->add_option("--lpml-delta", cfg.lpml_delta, "Ridge for LPML/LPMLX (default 1/n)");
    sub->add_option("--sieve-basis", cfg.sieve_basis, "NP basis: interaction | polynomial | spline");
    sub->add_option("--sieve-order", cfg.sieve_order, "Polynomial degree or spline order");
    sub->add_option("--sieve-knots", cfg.sieve_knots, "Interior spline knots");
    sub->add_flag("--sieve-additive", cfg.sieve_additive, "Additive rather than tensor-product sieve");
    sub->add_option("--lasso-c", cfg.lasso_c, "Lasso penalty constant");
    sub->add_option("--lasso-k", cfg.lasso_k, "Loading iterations");
    sub->add_option("--lasso-penalty", cfg.lasso_penalty, "implementation | theory");
    sub->add_option("--forced", cfg.forced_support, "Dictionary columns always kept after selection")
        ->delimiter(',')
        ->each([&cfg](const std::string&) { cfg.forced_support_set = true; });
    sub->add_flag("--literal-hd", cfg.literal_hd, "Evaluate the lasso model as logistic(H'theta)");
  };

  CLI::App* est = app.add_subcommand("estimate", "Estimate QTEs on a CSV file");
  add_common(est);
  est->add_option("input,--input", cfg.input, "CSV with columns y, a, s and covariates");
  est->add_option("--adjust,--method", cfg.method, "na | lp | ml | lpml | mlx | lpmlx | np | lasso");
  est->add_option("--null", cfg.null_value, "Null value for the tests");
  est->add_flag("--band", cfg.band, "Uniform band over the tau grid");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo size and power");
  add_common(sim);
  sim->add_option("--dgp", cfg.dgp, "1 | 2 | hd");
  sim->add_option("--scheme", cfg.scheme, "srs | wei | bcd | sbr");
  sim->add_option("--methods", cfg.methods, "Comma-separated adjustment methods");
  sim->add_option("--n", cfg.n, "Sample size");
  sim->add_option("--reps", cfg.reps, "Replications");
  sim->add_option("--band-taus", cfg.band_taus, "Grid for the uniform test");
  sim->add_flag("--no-difference", cfg.no_difference, "Skip the difference test");
  sim->add_flag("--no-band", cfg.no_band, "Skip the uniform test");
  sim->add_option("--delta", cfg.delta, "Perturbation of the truth for power");
  sim->add_option("--gamma", cfg.gamma, "Stratum-variable coefficient in the outcome");
  sim->add_option("--bcd-lambda", cfg.bcd_lambda, "Biased-coin probability");
  sim->add_option("--format", cfg.format, "csv | text");
  sim->add_option("--truth-cache", cfg.truth_cache, "JSON cache of oracle truths");
  sim->add_option("--oracle-n", cfg.oracle_n, "Oracle sample size");
  sim->add_option("--oracle-reps", cfg.oracle_reps, "Oracle replications");
  sim->add_option("--oracle-seed", cfg.oracle_seed, "Oracle seed");
  sim->add_option("--failure-budget", cfg.failure_budget, "Tolerated failed fraction of replications");
  sim->add_flag("--full", cfg.full, "Full scale: 10000 replications, B = 1000");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? static_cast<int>(exit_ok) : static_cast<int>(exit_usage);
  }
  if (est->parsed()) {
    cfg.command = "estimate";
    return cmd_estimate(cfg, out, err);
  }
  cfg.command = "simulate";
  return cmd_simulate(cfg, out, err);
}

}  // namespace qte
