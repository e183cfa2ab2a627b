#pragma once

// Simulation designs with potential outcomes. All three share the outcome
// equation Y = alpha(X) + gamma*Z + mu(X)*A + eta and five strata induced by
// four cut points on Z.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qte/data.hpp"
#include "qte/rng.hpp"

namespace qte {

enum class DgpKind { dgp1, dgp2, hd };

DgpKind parse_dgp(const std::string& name);  // "1", "2", "hd"
std::string to_string(DgpKind kind);

struct DgpSpec {
  DgpKind kind = DgpKind::dgp1;
  std::size_t n = 400;
  double gamma = 4.0;
};

struct PotentialData {
  Eigen::VectorXd z;
  std::vector<int> s;
  Eigen::MatrixXd x;
  Eigen::VectorXd eps1, eps2;
  Eigen::VectorXd y1, y0;

  std::size_t n() const noexcept { return static_cast<std::size_t>(z.size()); }
  // Observed dataset Y = y1*a + y0*(1-a).
  Dataset observe(std::span<const int> a) const;
};

std::array<double, 4> stratum_cuts(DgpKind kind);
int stratum_of(DgpKind kind, double z);

struct UnitOutcomes {
  double y1;
  double y0;
};
UnitOutcomes unit_outcomes(DgpKind kind, double gamma, double z, const Eigen::Ref<const Eigen::VectorXd>& x,
                           double eps1, double eps2);

Eigen::MatrixXd toeplitz_covariance(std::size_t dim, double rho);

PotentialData generate(const DgpSpec& spec, Rng& rng);

using PotentialSampler = std::function<PotentialData(std::size_t n, Rng& rng)>;

// Average over mc_reps draws of size mc_n of (empirical tau-quantile of y1
// minus that of y0). Replication r uses its own stream derived from
// (seed, r), so output is independent of `threads`.
std::vector<double> true_qte_oracle(const PotentialSampler& sampler, const QuantileGrid& grid, std::size_t mc_n,
                                    std::size_t mc_reps, std::uint64_t seed, unsigned threads = 1);
std::vector<double> true_qte_oracle(const DgpSpec& spec, const QuantileGrid& grid, std::size_t mc_n,
                                    std::size_t mc_reps, std::uint64_t seed, unsigned threads = 1);

struct OracleConfig {
  std::size_t mc_n = 10000;
  std::size_t mc_reps = 1000;
  std::uint64_t seed = 20240101;
};

// JSON sidecar of oracle truths keyed by (dgp, tau, mc_n, mc_reps, seed).
class TruthCache {
 public:
  TruthCache() = default;
  explicit TruthCache(std::string path);  // loads if the file exists

  std::optional<double> lookup(DgpKind kind, double tau, const OracleConfig& cfg) const;
  void store(DgpKind kind, double tau, const OracleConfig& cfg, double value);
  void save() const;  // no-op without a path
  std::size_t size() const noexcept { return entries_.size(); }

  static std::string key(DgpKind kind, double tau, const OracleConfig& cfg);

 private:
  std::string path_;
  std::map<std::string, double> entries_;
};

// Truths on `grid`, computing only the entries missing from `cache`.
std::vector<double> cached_true_qte(const DgpSpec& spec, const QuantileGrid& grid, const OracleConfig& cfg,
                                    TruthCache* cache, unsigned threads = 1);

}  // namespace qte
