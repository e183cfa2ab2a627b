#pragma once

// Covariate-adaptive treatment assignment: simple random sampling, Wei's
// adaptive biased coin, Efron's biased coin and stratified block
// randomization. Assignment functions read only stratum labels, never
// outcomes or covariates.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qte/rng.hpp"

namespace qte {

enum class SchemeKind { srs, wei, bcd, sbr };

SchemeKind parse_scheme(const std::string& name);
std::string to_string(SchemeKind kind);

struct SchemeSpec {
  SchemeKind kind = SchemeKind::srs;
  // Target treated fraction; per-stratum overrides in pi_by_stratum
  // (indexed by stratum label) take precedence over default_pi.
  double default_pi = 0.5;
  std::vector<double> pi_by_stratum;
  double lambda = 0.75;
  std::function<double(double)> phi = [](double x) { return (1.0 - x) / 2.0; };

  double pi(int stratum) const;
  // Throws UsageError when any invariant of the chosen scheme fails.
  void validate() const;
};

// P(A_k = 1) under WEI given the stratum history: signed treated-minus-control
// difference `diff` (= 2 D_{k-1}) over `count` earlier units.
double wei_probability(long diff, long count, const std::function<double(double)>& phi);
// P(A_k = 1) under BCD given the treated-minus-control difference.
double bcd_probability(long diff, double lambda);

std::vector<int> assign_srs(std::span<const int> strata, const SchemeSpec& spec, Rng& rng);
std::vector<int> assign_wei(std::span<const int> strata, const SchemeSpec& spec, Rng& rng);
std::vector<int> assign_bcd(std::span<const int> strata, const SchemeSpec& spec, Rng& rng);
std::vector<int> assign_sbr(std::span<const int> strata, const SchemeSpec& spec, Rng& rng);

// Dispatches on spec.kind. Strata must be nonnegative integers; sequential
// schemes treat row order as arrival order.
std::vector<int> assign(std::span<const int> strata, const SchemeSpec& spec, Rng& rng);

}  // namespace qte
