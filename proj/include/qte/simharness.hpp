#pragma once

// Monte Carlo size and power of the pointwise, difference and uniform tests
// across data-generating processes, assignment schemes and adjustment
// methods.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "qte/adjust.hpp"
#include "qte/dgp.hpp"
#include "qte/estimator.hpp"
#include "qte/randomization.hpp"

namespace qte {

struct ScenarioSpec {
  DgpSpec dgp;
  SchemeSpec scheme;
  std::vector<Method> methods{Method::na};
  std::size_t reps = 100;
  std::size_t B = 200;
  std::vector<double> pointwise_taus{0.25, 0.5, 0.75};
  bool difference = true;
  std::pair<double, double> difference_taus{0.75, 0.25};
  bool uniform = true;
  std::vector<double> band_taus;  // empty: 0.25, 0.30, ..., 0.75
  double delta = 1.5;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  PiSource pi_source;
  AdjustOptions adjust;  // method and threads are overridden per run
  OracleConfig oracle;
  TruthCache* truth_cache = nullptr;
  unsigned threads = 1;
  double failure_budget = 0.01;  // fraction of reps

  void validate() const;
  // Union of all tau used by the three tests, sorted.
  QuantileGrid estimation_grid() const;
  std::vector<double> band_grid() const;
};

// One table cell: one method and one test family.
struct ResultRow {
  std::string dgp;
  std::string scheme;
  std::string method;
  std::string pi_source;
  std::string test;  // "pointwise:0.5", "difference:0.75-0.25", "uniform:0.25-0.75"
  std::size_t n = 0;
  std::size_t reps = 0;
  std::size_t B = 0;
  std::size_t completed = 0;
  double alpha = 0.05;
  double delta = 0.0;
  double size = 0.0;
  double size_mcse = 0.0;
  double power = 0.0;
  double power_mcse = 0.0;
  double mean_bias = 0.0;
  double mean_se = 0.0;

  bool operator==(const ResultRow&) const = default;
};

struct ScenarioResult {
  std::vector<ResultRow> rows;
  std::vector<double> truth;  // on the estimation grid
  std::size_t failures = 0;
  std::size_t failure_budget = 0;
  bool budget_exceeded = false;
  std::vector<std::string> failure_messages;  // first few, in replication order
  std::size_t bootstrap_redraws = 0;
  std::size_t degraded_cells = 0;
};

// Replication r draws potential outcomes from derive_seed(seed, {r, 1}),
// assignments from {r, 2}, and bootstrap weights from master seed
// derive_seed(seed, {r, 3}); all methods share them.
ScenarioResult run_scenario(const ScenarioSpec& spec);

enum class TableFormat { csv, text };

std::string emit_table(const std::vector<ResultRow>& rows, TableFormat format);
std::vector<ResultRow> parse_table_csv(std::istream& in);

// Forced post-selection covariate for the high-dimensional design: X1,
// column 1 of (1, X).
LassoConfig default_lasso_config(DgpKind kind);

}  // namespace qte
