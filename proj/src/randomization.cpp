#include "qte/randomization.hpp"

#include <algorithm>
#include <cmath>

#include "qte/error.hpp"

namespace qte {
namespace {

std::size_t stratum_slots(std::span<const int> strata) {
  int top = -1;
  for (int s : strata) {
    if (s < 0) throw UsageError("stratum labels passed to randomization must be nonnegative");
    top = std::max(top, s);
  }
  return static_cast<std::size_t>(top + 1);
}

bool bernoulli(double p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < p;
}

void require_half(const SchemeSpec& spec, std::span<const int> strata, const char* scheme) {
  for (int s : strata) {
    if (spec.pi(s) != 0.5) {
      throw UsageError(std::string(scheme) + " is defined for a target fraction of 1/2 only");
    }
  }
}

}  // namespace

SchemeKind parse_scheme(const std::string& name) {
  if (name == "srs") return SchemeKind::srs;
  if (name == "wei") return SchemeKind::wei;
  if (name == "bcd") return SchemeKind::bcd;
  if (name == "sbr") return SchemeKind::sbr;
  throw UsageError("unknown randomization scheme '" + name + "' (expected srs, wei, bcd or sbr)");
}

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::srs: return "srs";
    case SchemeKind::wei: return "wei";
    case SchemeKind::bcd: return "bcd";
    case SchemeKind::sbr: return "sbr";
  }
  return "?";
}

double SchemeSpec::pi(int stratum) const {
  const auto k = static_cast<std::size_t>(stratum);
  if (stratum >= 0 && k < pi_by_stratum.size()) return pi_by_stratum[k];
  return default_pi;
}

void SchemeSpec::validate() const {
  auto check_pi = [](double p) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("target fraction must lie in (0,1)");
  };
  check_pi(default_pi);
  for (double p : pi_by_stratum) check_pi(p);
  if (kind == SchemeKind::bcd && !(lambda > 0.5 && lambda <= 1.0)) {
    throw UsageError("BCD lambda must lie in (0.5, 1]");
  }
  if (kind == SchemeKind::wei) {
    if (!phi) throw UsageError("WEI requires an allocation function phi");
    double prev = 2.0;
    for (int k = -20; k <= 20; ++k) {
      const double x = k / 20.0;
      const double v = phi(x);
      if (!(v >= 0.0 && v <= 1.0)) throw UsageError("phi must map [-1,1] into [0,1]");
      if (v > prev + 1e-12) throw UsageError("phi must be non-increasing");
      if (std::abs(phi(-x) - (1.0 - v)) > 1e-12) throw UsageError("phi must satisfy phi(-x) = 1 - phi(x)");
      prev = v;
    }
  }
}

double wei_probability(long diff, long count, const std::function<double(double)>& phi) {
  // 2 D_{k-1} / n_{k-1}, with 0/0 read as 0 for the first unit of a stratum.
  const double ratio = count == 0 ? 0.0 : static_cast<double>(diff) / static_cast<double>(count);
  return phi(ratio);
}

double bcd_probability(long diff, double lambda) {
  if (diff == 0) return 0.5;
  return diff < 0 ? lambda : 1.0 - lambda;
}

std::vector<int> assign_srs(std::span<const int> strata, const SchemeSpec& spec, Rng& rng) {
  spec.validate();
  stratum_slots(strata);
  std::vector<int> a(strata.size());
  for (std::size_t i = 0; i < strata.size(); ++i) a[i] = bernoulli(spec.pi(strata[i]), rng) ? 1 : 0;
  return a;
}

std::vector<int> assign_wei(std::span<const int> strata, const SchemeSpec& spec, Rng& rng) {
  spec.validate();
  require_half(spec, strata, "WEI");
  const std::size_t slots = stratum_slots(strata);
  std::vector<long> diff(slots, 0), count(slots, 0);
  std::vector<int> a(strata.size());
  for (std::size_t i = 0; i < strata.size(); ++i) {
    const auto s = static_cast<std::size_t>(strata[i]);
    a[i] = bernoulli(wei_probability(diff[s], count[s], spec.phi), rng) ? 1 : 0;
    diff[s] += a[i] == 1 ? 1 : -1;
    ++count[s];
  }
  return a;
}

std::vector<int> assign_bcd(std::span<const int> strata, const SchemeSpec& spec, Rng& rng) {
  spec.validate();
  require_half(spec, strata, "BCD");
  const std::size_t slots = stratum_slots(strata);
  std::vector<long> diff(slots, 0);
  std::vector<int> a(strata.size());
  for (std::size_t i = 0; i < strata.size(); ++i) {
    const auto s = static_cast<std::size_t>(strata[i]);
    a[i] = bernoulli(bcd_probability(diff[s], spec.lambda), rng) ? 1 : 0;
    diff[s] += a[i] == 1 ? 1 : -1;
  }
  return a;
}

std::vector<int> assign_sbr(std::span<const int> strata, const SchemeSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t slots = stratum_slots(strata);
  std::vector<std::vector<std::size_t>> members(slots);
  for (std::size_t i = 0; i < strata.size(); ++i) members[static_cast<std::size_t>(strata[i])].push_back(i);
  std::vector<int> a(strata.size(), 0);
  for (std::size_t s = 0; s < slots; ++s) {
    auto& idx = members[s];
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    // The product pi*n can land a hair below an integer; nudge before flooring.
    const double target = spec.pi(static_cast<int>(s)) * static_cast<double>(idx.size());
    const auto treated = static_cast<std::size_t>(std::floor(target + 1e-9));
    for (std::size_t k = 0; k < treated; ++k) a[idx[k]] = 1;
  }
  return a;
}

std::vector<int> assign(std::span<const int> strata, const SchemeSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case SchemeKind::srs: return assign_srs(strata, spec, rng);
    case SchemeKind::wei: return assign_wei(strata, spec, rng);
    case SchemeKind::bcd: return assign_bcd(strata, spec, rng);
    case SchemeKind::sbr: return assign_sbr(strata, spec, rng);
  }
  throw UsageError("unhandled scheme");
}

}  // namespace qte
