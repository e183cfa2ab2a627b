#include "qte/dgp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "qte/error.hpp"
#include "qte/numeric.hpp"
#include "qte/parallel.hpp"

namespace qte {
namespace {

constexpr std::size_t kHdDim = 20;

double standardized_beta22(Rng& rng) {
  std::gamma_distribution<double> g(2.0, 1.0);
  const double u = g(rng);
  const double v = g(rng);
  return (u / (u + v) - 0.5) * std::sqrt(20.0);
}

}  // namespace

DgpKind parse_dgp(const std::string& name) {
  if (name == "1" || name == "i" || name == "dgp1") return DgpKind::dgp1;
  if (name == "2" || name == "ii" || name == "dgp2") return DgpKind::dgp2;
  if (name == "hd") return DgpKind::hd;
  throw UsageError("unknown DGP '" + name + "' (expected 1, 2 or hd)");
}

std::string to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::dgp1: return "1";
    case DgpKind::dgp2: return "2";
    case DgpKind::hd: return "hd";
  }
  return "?";
}

std::array<double, 4> stratum_cuts(DgpKind kind) {
  switch (kind) {
    case DgpKind::dgp1: {
      const double r = std::sqrt(20.0);
      return {-0.25 * r, 0.0, 0.25 * r, 0.5 * r};
    }
    case DgpKind::dgp2: return {-1.0, 0.0, 1.0, 2.0};
    case DgpKind::hd: {
      const double r = std::sqrt(5.0);
      return {-0.5 * r, 0.0, 0.5 * r, r};
    }
  }
  return {};
}

int stratum_of(DgpKind kind, double z) {
  int s = 0;
  for (double g : stratum_cuts(kind)) s += z <= g ? 1 : 0;
  return s;
}

UnitOutcomes unit_outcomes(DgpKind kind, double gamma, double z, const Eigen::Ref<const Eigen::VectorXd>& x,
                           double eps1, double eps2) {
  double alpha = 0.0;
  double mu = 0.0;
  double eta1 = 0.0;
  double eta0 = 0.0;
  switch (kind) {
    case DgpKind::dgp1: {
      const double x1 = x(0), x2 = x(1);
      alpha = 1.0 + x2;
      mu = 1.0 + 3.0 * x1 + 3.0 * x2;
      eta1 = (0.25 + x1 * x1) * eps1;
      eta0 = eps2;
      break;
    }
    case DgpKind::dgp2: {
      const double x1 = x(0), x2 = x(1);
      const double lin = 2.0 * x1 + 2.0 * x2;
      alpha = 1.0 + x1 + x2;
      mu = 1.0 + x1 + x2 + lin * lin / 4.0;
      const double scale = 1.0 + z * z;
      eta1 = 2.0 * scale * eps1;
      eta0 = scale * eps2;
      break;
    }
    case DgpKind::hd: {
      alpha = 1.0;
      mu = 1.0;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double kk = static_cast<double>(k + 1);
        mu += x(k) * 4.0 / (kk * kk);
      }
      eta1 = 2.0 * eps1;
      eta0 = eps2;
      break;
    }
  }
  const double base = alpha + gamma * z;
  return {base + mu + eta1, base + eta0};
}

Eigen::MatrixXd toeplitz_covariance(std::size_t dim, double rho) {
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
  }
  return m;
}

Dataset PotentialData::observe(std::span<const int> a) const {
  if (a.size() != n()) throw DataError("assignment length does not match potential data");
  Eigen::VectorXd y(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    y(i) = a[static_cast<std::size_t>(i)] == 1 ? y1(i) : y0(i);
  }
  return Dataset::from_strata(std::move(y), std::vector<int>(a.begin(), a.end()), s, x);
}

PotentialData generate(const DgpSpec& spec, Rng& rng) {
  if (spec.n < 1) throw UsageError("DGP sample size must be at least 1");
  const auto n = static_cast<Eigen::Index>(spec.n);
  PotentialData pd;
  pd.z.resize(n);
  pd.s.resize(spec.n);
  pd.eps1.resize(n);
  pd.eps2.resize(n);
  pd.y1.resize(n);
  pd.y0.resize(n);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::student_t_distribution<double> t5(5.0);

  Eigen::MatrixXd chol;
  if (spec.kind == DgpKind::hd) {
    Eigen::LLT<Eigen::MatrixXd> llt(toeplitz_covariance(kHdDim, 0.5));
    if (llt.info() != Eigen::Success) throw NumericalError("Toeplitz covariance is not positive definite");
    chol = llt.matrixL();
    pd.x.resize(n, static_cast<Eigen::Index>(kHdDim));
  } else {
    pd.x.resize(n, 2);
  }

  Eigen::VectorXd g(static_cast<Eigen::Index>(kHdDim));
  for (Eigen::Index i = 0; i < n; ++i) {
    double z = 0.0;
    switch (spec.kind) {
      case DgpKind::dgp1:
        z = standardized_beta22(rng);
        pd.x(i, 0) = unif(rng);
        pd.x(i, 1) = normal(rng);
        pd.eps1(i) = normal(rng);
        pd.eps2(i) = normal(rng);
        break;
      case DgpKind::dgp2:
        z = unif(rng);
        pd.x(i, 0) = unif(rng);
        pd.x(i, 1) = normal(rng);
        pd.eps1(i) = t5(rng) / std::sqrt(5.0);
        pd.eps2(i) = t5(rng) / std::sqrt(5.0);
        break;
      case DgpKind::hd: {
        z = standardized_beta22(rng);
        for (Eigen::Index k = 0; k < g.size(); ++k) g(k) = normal(rng);
        const Eigen::VectorXd w = chol * g;
        for (Eigen::Index k = 0; k < w.size(); ++k) pd.x(i, k) = normal_cdf(w(k));
        pd.eps1(i) = normal(rng);
        pd.eps2(i) = normal(rng);
        break;
      }
    }
    pd.z(i) = z;
    pd.s[static_cast<std::size_t>(i)] = stratum_of(spec.kind, z);
    const auto out = unit_outcomes(spec.kind, spec.gamma, z, pd.x.row(i).transpose(), pd.eps1(i), pd.eps2(i));
    pd.y1(i) = out.y1;
    pd.y0(i) = out.y0;
  }
  return pd;
}

std::vector<double> true_qte_oracle(const PotentialSampler& sampler, const QuantileGrid& grid, std::size_t mc_n,
                                    std::size_t mc_reps, std::uint64_t seed, unsigned threads) {
  if (mc_n < 1 || mc_reps < 1) throw UsageError("oracle needs mc_n >= 1 and mc_reps >= 1");
  std::vector<std::vector<double>> per_rep(mc_reps, std::vector<double>(grid.size()));
  parallel_for(mc_reps, threads, [&](std::size_t r) {
    Rng rng = make_rng(seed, {0x0c1e, r});
    PotentialData pd = sampler(mc_n, rng);
    std::vector<double> y1(pd.y1.data(), pd.y1.data() + pd.y1.size());
    std::vector<double> y0(pd.y0.data(), pd.y0.data() + pd.y0.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      per_rep[r][k] = inverse_cdf_quantile(y1, grid[k]) - inverse_cdf_quantile(y0, grid[k]);
    }
  });
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CompensatedSum acc;
    for (std::size_t r = 0; r < mc_reps; ++r) acc.add(per_rep[r][k]);
    out[k] = acc.value() / static_cast<double>(mc_reps);
  }
  return out;
}

std::vector<double> true_qte_oracle(const DgpSpec& spec, const QuantileGrid& grid, std::size_t mc_n,
                                    std::size_t mc_reps, std::uint64_t seed, unsigned threads) {
  const PotentialSampler sampler = [spec](std::size_t n, Rng& rng) {
    DgpSpec s = spec;
    s.n = n;
    return generate(s, rng);
  };
  return true_qte_oracle(sampler, grid, mc_n, mc_reps, seed, threads);
}

TruthCache::TruthCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    return;  // unreadable cache is treated as empty and rewritten on save
  }
  if (!j.contains("entries") || !j["entries"].is_object()) return;
  for (const auto& [k, v] : j["entries"].items()) {
    if (v.is_number()) entries_[k] = v.get<double>();
  }
}

std::string TruthCache::key(DgpKind kind, double tau, const OracleConfig& cfg) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "dgp=%s;tau=%.6f;mc_n=%zu;mc_reps=%zu;seed=%llu", to_string(kind).c_str(), tau,
                cfg.mc_n, cfg.mc_reps, static_cast<unsigned long long>(cfg.seed));
  return buf;
}

std::optional<double> TruthCache::lookup(DgpKind kind, double tau, const OracleConfig& cfg) const {
  auto it = entries_.find(key(kind, tau, cfg));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void TruthCache::store(DgpKind kind, double tau, const OracleConfig& cfg, double value) {
  entries_[key(kind, tau, cfg)] = value;
}

void TruthCache::save() const {
  if (path_.empty()) return;
  nlohmann::json j;
  j["schema_version"] = 1;
  j["entries"] = nlohmann::json::object();
  for (const auto& [k, v] : entries_) j["entries"][k] = v;
  std::ofstream out(path_);
  if (!out) throw std::ios_base::failure("cannot write truth cache '" + path_ + "'");
  out << j.dump(2) << '\n';
}

std::vector<double> cached_true_qte(const DgpSpec& spec, const QuantileGrid& grid, const OracleConfig& cfg,
                                    TruthCache* cache, unsigned threads) {
  std::vector<double> out(grid.size());
  std::vector<double> missing;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::optional<double> hit = cache ? cache->lookup(spec.kind, grid[k], cfg) : std::nullopt;
    if (hit) {
      out[k] = *hit;
    } else {
      missing.push_back(grid[k]);
    }
  }
  if (missing.empty()) return out;
  // Oracle draws are shared across taus, so each tau's value does not depend
  // on which other taus are requested alongside it.
  const QuantileGrid sub(missing);
  const auto fresh = true_qte_oracle(spec, sub, cfg.mc_n, cfg.mc_reps, cfg.seed, threads);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (auto idx = sub.index_of(grid[k])) {
      out[k] = fresh[*idx];
      if (cache) cache->store(spec.kind, grid[k], cfg, out[k]);
    }
  }
  return out;
}

}  // namespace qte
