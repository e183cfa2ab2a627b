#pragma once

// Command-line front end: `estimate` on a CSV file and `simulate` over the
// Monte Carlo harness.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qte {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 2,
  exit_data = 3,       // schema or data validation
  exit_numerical = 4,  // fit or solve failure, or simulation failure budget exceeded
  exit_io = 5,
  exit_degenerate = 6,  // a stratum without treated or control units
};

struct RunConfig {
  std::string command;  // "estimate" or "simulate"

  // shared
  std::string method = "na";                   // estimate: one method
  std::string methods = "na,lp";               // simulate: comma-separated
  std::string taus = "0.25,0.5,0.75";          // list or first:step:last
  std::size_t B = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string pi_source = "estimated";
  std::string out;
  unsigned threads = 0;  // 0: QTE_THREADS or hardware

  // adjustment tuning
  std::optional<double> lpml_delta;
  std::string sieve_basis = "interaction";
  int sieve_order = 2;
  std::size_t sieve_knots = 1;
  bool sieve_additive = false;
  double lasso_c = 1.1;
  std::size_t lasso_k = 2;
  std::string lasso_penalty = "implementation";
  std::vector<std::size_t> forced_support;
  bool forced_support_set = false;
  bool literal_hd = false;

  // estimate
  std::string input;
  double target_pi = 0.5;
  double null_value = 0.0;
  std::string difference;  // "tau1,tau2"
  bool band = false;

  // simulate
  std::string dgp = "1";
  std::string scheme = "srs";
  std::size_t n = 400;
  std::size_t reps = 100;
  std::string band_taus = "0.25:0.05:0.75";
  bool no_difference = false;
  bool no_band = false;
  double delta = 1.5;
  double gamma = 4.0;
  double bcd_lambda = 0.75;
  std::string format = "csv";
  std::string truth_cache;
  std::size_t oracle_n = 10000;
  std::size_t oracle_reps = 1000;
  std::uint64_t oracle_seed = 20240101;
  double failure_budget = 0.01;
  bool full = false;
};

// Comma list ("0.25,0.5") or inclusive range ("0.25:0.05:0.75").
std::vector<double> parse_tau_list(const std::string& text);

// Parses argv and runs the selected command. Reports go to `out` unless a
// path is given; messages go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int cmd_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace qte
