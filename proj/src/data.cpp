#include "qte/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <string>

#include "qte/error.hpp"
#include "qte/numeric.hpp"

namespace qte {
namespace {

std::optional<long long> parse_integer(const std::string& s) {
  long long v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty()) return std::nullopt;
  return v;
}

std::vector<std::string> ordered_labels(const std::vector<std::string>& raw) {
  std::vector<std::string> distinct(raw.begin(), raw.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const bool all_integer = std::all_of(distinct.begin(), distinct.end(),
                                       [](const std::string& s) { return parse_integer(s).has_value(); });
  if (all_integer) {
    std::sort(distinct.begin(), distinct.end(), [](const std::string& l, const std::string& r) {
      return *parse_integer(l) < *parse_integer(r);
    });
  }
  return distinct;
}

}  // namespace

Dataset Dataset::from_labels(Eigen::VectorXd y, std::vector<int> a,
                             const std::vector<std::string>& stratum_labels, Eigen::MatrixXd x,
                             std::vector<std::string> covariate_names) {
  Dataset d;
  d.y_ = std::move(y);
  d.a_ = std::move(a);
  d.x_ = std::move(x);
  if (stratum_labels.size() != static_cast<std::size_t>(d.y_.size())) {
    throw DataError("stratum vector length " + std::to_string(stratum_labels.size()) +
                    " does not match outcome length " + std::to_string(d.y_.size()));
  }
  d.labels_ = ordered_labels(stratum_labels);
  std::map<std::string, int> ids;
  for (std::size_t k = 0; k < d.labels_.size(); ++k) ids.emplace(d.labels_[k], static_cast<int>(k));
  d.s_.reserve(stratum_labels.size());
  for (const auto& l : stratum_labels) d.s_.push_back(ids.at(l));

  if (covariate_names.empty()) {
    for (Eigen::Index j = 0; j < d.x_.cols(); ++j) covariate_names.push_back("x" + std::to_string(j + 1));
  }
  d.names_ = std::move(covariate_names);
  d.validate();
  return d;
}

Dataset Dataset::from_strata(Eigen::VectorXd y, std::vector<int> a, const std::vector<int>& strata,
                             Eigen::MatrixXd x, std::vector<std::string> covariate_names) {
  std::vector<std::string> labels;
  labels.reserve(strata.size());
  for (int s : strata) labels.push_back(std::to_string(s));
  return from_labels(std::move(y), std::move(a), labels, std::move(x), std::move(covariate_names));
}

void Dataset::validate() const {
  const auto n = static_cast<std::size_t>(y_.size());
  if (n == 0) throw DataError("dataset must contain at least one unit");
  if (a_.size() != n) throw DataError("treatment vector length does not match outcome length");
  if (static_cast<std::size_t>(x_.rows()) != n) {
    throw DataError("covariate matrix has " + std::to_string(x_.rows()) + " rows, expected " +
                    std::to_string(n));
  }
  if (names_.size() != static_cast<std::size_t>(x_.cols())) {
    throw DataError("covariate name count does not match covariate columns");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (a_[i] != 0 && a_[i] != 1) {
      throw DataError("treatment entry " + std::to_string(i) + " is not 0 or 1");
    }
    if (!std::isfinite(y_(static_cast<Eigen::Index>(i)))) {
      throw DataError("outcome entry " + std::to_string(i) + " is not finite");
    }
  }
  if (!x_.allFinite()) {
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (!x_.col(j).allFinite()) {
        throw DataError("covariate column '" + names_[static_cast<std::size_t>(j)] +
                        "' contains non-finite values");
      }
    }
  }
}

std::optional<int> Dataset::stratum_id(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<int>(it - labels_.begin());
}

Dataset Dataset::with_treatment(std::vector<int> a) const {
  Dataset d = *this;
  d.a_ = std::move(a);
  d.validate();
  return d;
}

QuantileGrid::QuantileGrid(std::vector<double> taus) : taus_(std::move(taus)) {
  if (taus_.empty()) throw UsageError("quantile grid must not be empty");
  for (std::size_t k = 0; k < taus_.size(); ++k) {
    if (!(taus_[k] > 0.0 && taus_[k] < 1.0)) {
      throw UsageError("quantile index " + std::to_string(taus_[k]) + " outside (0,1)");
    }
    if (k > 0 && !(taus_[k] > taus_[k - 1])) {
      throw UsageError("quantile grid must be strictly increasing");
    }
  }
}

QuantileGrid QuantileGrid::linspace(double first, double last, std::size_t count) {
  if (count == 1) return QuantileGrid({first});
  std::vector<double> t(count);
  for (std::size_t k = 0; k < count; ++k) {
    t[k] = first + (last - first) * static_cast<double>(k) / static_cast<double>(count - 1);
  }
  return QuantileGrid(std::move(t));
}

std::optional<std::size_t> QuantileGrid::index_of(double tau) const {
  for (std::size_t k = 0; k < taus_.size(); ++k) {
    if (std::abs(taus_[k] - tau) <= 1e-12) return k;
  }
  return std::nullopt;
}

WeightVector WeightVector::unit(std::size_t n) { return WeightVector{std::vector<double>(n, 1.0), WeightKind::unit}; }

WeightVector WeightVector::bootstrap(std::vector<double> w) {
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("bootstrap weights must be finite and nonnegative");
  }
  return WeightVector{std::move(w), WeightKind::bootstrap};
}

StrataStats index_strata(const Dataset& data, const WeightVector& weights, std::span<const double> target_pi) {
  const std::size_t n = data.n();
  const std::size_t k = data.num_strata();
  if (weights.size() != n) throw DataError("weight vector length does not match dataset");
  if (target_pi.size() != k) throw UsageError("target_pi must have one entry per stratum");
  for (double p : target_pi) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("target fractions must lie in (0,1)");
  }

  StrataStats st;
  st.n.assign(k, 0);
  st.n1.assign(k, 0);
  st.n0.assign(k, 0);
  st.target_pi.assign(target_pi.begin(), target_pi.end());
  st.weight_kind = weights.kind;

  std::vector<CompensatedSum> w1(k), w0(k);
  CompensatedSum total;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(data.stratum(i));
    const double wi = weights.w[i];
    ++st.n[s];
    total.add(wi);
    if (data.a(i) == 1) {
      ++st.n1[s];
      w1[s].add(wi);
    } else {
      ++st.n0[s];
      w0[s].add(wi);
    }
  }
  st.weight_total = total.value();

  st.pi_hat.resize(k);
  st.imbalance.resize(k);
  st.nw.resize(k);
  st.n1w.resize(k);
  st.n0w.resize(k);
  st.pi_hat_w.resize(k);
  for (std::size_t s = 0; s < k; ++s) {
    if (st.n[s] == 0) throw EmptyStratumError(static_cast<int>(s), data.label(static_cast<int>(s)));
    const double ns = static_cast<double>(st.n[s]);
    st.pi_hat[s] = static_cast<double>(st.n1[s]) / ns;
    st.imbalance[s] = static_cast<double>(st.n1[s]) - st.target_pi[s] * ns;
    st.n1w[s] = w1[s].value();
    st.n0w[s] = w0[s].value();
    CompensatedSum both;
    both.add(st.n1w[s]);
    both.add(st.n0w[s]);
    st.nw[s] = both.value();
    if (!(st.nw[s] > 0.0)) throw EmptyStratumError(static_cast<int>(s), data.label(static_cast<int>(s)));
    st.pi_hat_w[s] = st.n1w[s] / st.nw[s];
    if (st.n1[s] == 0 || st.n0[s] == 0 || st.n1w[s] <= 0.0 || st.n0w[s] <= 0.0) {
      st.degenerate.push_back(static_cast<int>(s));
    }
  }
  return st;
}

StrataStats index_strata(const Dataset& data, const WeightVector& weights, double target_pi) {
  const std::vector<double> pis(data.num_strata(), target_pi);
  return index_strata(data, weights, pis);
}

std::vector<int> validate_for_estimation(const StrataStats& stats) {
  std::vector<int> out;
  for (std::size_t s = 0; s < stats.num_strata(); ++s) {
    if (stats.n1[s] == 0 || stats.n0[s] == 0 || stats.n1w[s] <= 0.0 || stats.n0w[s] <= 0.0) {
      out.push_back(static_cast<int>(s));
    }
  }
  return out;
}

void require_estimable(const Dataset& data, const StrataStats& stats) {
  for (int s : validate_for_estimation(stats)) {
    const auto k = static_cast<std::size_t>(s);
    const int missing = (stats.n1[k] == 0 || stats.n1w[k] <= 0.0) ? 1 : 0;
    throw DegenerateCellError(s, data.label(s), missing);
  }
}

}  // namespace qte
