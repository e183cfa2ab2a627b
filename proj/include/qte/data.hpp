#pragma once

// Experimental data container, quantile grids, weights and per-stratum
// bookkeeping shared by every estimator in the library.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qte {

// Observed (Y, A, S, X) for n units. Stratum labels are arbitrary tokens
// mapped to dense ids 0..K-1; ids follow numeric order when every label is
// an integer and lexicographic order otherwise. Immutable once built.
class Dataset {
 public:
  static Dataset from_labels(Eigen::VectorXd y, std::vector<int> a,
                             const std::vector<std::string>& stratum_labels, Eigen::MatrixXd x,
                             std::vector<std::string> covariate_names = {});
  static Dataset from_strata(Eigen::VectorXd y, std::vector<int> a,
                             const std::vector<int>& strata, Eigen::MatrixXd x,
                             std::vector<std::string> covariate_names = {});

  std::size_t n() const noexcept { return static_cast<std::size_t>(y_.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(x_.cols()); }
  std::size_t num_strata() const noexcept { return labels_.size(); }

  const Eigen::VectorXd& y() const noexcept { return y_; }
  const std::vector<int>& a() const noexcept { return a_; }
  const std::vector<int>& strata() const noexcept { return s_; }
  const Eigen::MatrixXd& x() const noexcept { return x_; }

  double y(std::size_t i) const { return y_(static_cast<Eigen::Index>(i)); }
  int a(std::size_t i) const { return a_[i]; }
  int stratum(std::size_t i) const { return s_[i]; }
  const std::string& label(int stratum) const { return labels_.at(static_cast<std::size_t>(stratum)); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }
  std::optional<int> stratum_id(const std::string& label) const;

  // Same units and strata with a different treatment vector.
  Dataset with_treatment(std::vector<int> a) const;

 private:
  Dataset() = default;
  void validate() const;

  Eigen::VectorXd y_;
  std::vector<int> a_;
  std::vector<int> s_;
  Eigen::MatrixXd x_;
  std::vector<std::string> labels_;
  std::vector<std::string> names_;
};

// Strictly increasing quantile indices inside (0,1).
class QuantileGrid {
 public:
  explicit QuantileGrid(std::vector<double> taus);
  static QuantileGrid linspace(double first, double last, std::size_t count);

  std::size_t size() const noexcept { return taus_.size(); }
  double operator[](std::size_t k) const { return taus_[k]; }
  std::span<const double> taus() const noexcept { return taus_; }
  // Index of tau within 1e-12, if present.
  std::optional<std::size_t> index_of(double tau) const;

 private:
  std::vector<double> taus_;
};

enum class WeightKind { unit, bootstrap };

struct WeightVector {
  std::vector<double> w;
  WeightKind kind = WeightKind::unit;

  static WeightVector unit(std::size_t n);
  static WeightVector bootstrap(std::vector<double> w);
  std::size_t size() const noexcept { return w.size(); }
};

// Per-stratum counts. The unweighted fields always come from the raw
// assignment; the *_w fields come from the supplied weights (and equal the
// unweighted ones for unit weights).
struct StrataStats {
  std::vector<std::size_t> n, n1, n0;
  std::vector<double> pi_hat;     // n1/n
  std::vector<double> target_pi;  // pi(s) supplied by the caller
  std::vector<double> imbalance;  // D_n(s) = n1(s) - pi(s) n(s)
  std::vector<double> nw, n1w, n0w, pi_hat_w;
  double weight_total = 0.0;
  WeightKind weight_kind = WeightKind::unit;
  std::vector<int> degenerate;  // strata missing treated or control (weighted) mass

  std::size_t num_strata() const noexcept { return n.size(); }
};

StrataStats index_strata(const Dataset& data, const WeightVector& weights,
                         std::span<const double> target_pi);
StrataStats index_strata(const Dataset& data, const WeightVector& weights, double target_pi = 0.5);

// Strata where n1(s)=0 or n0(s)=0, or where weighted treated/control mass is 0.
std::vector<int> validate_for_estimation(const StrataStats& stats);

// Throws DegenerateCellError for the first degenerate stratum.
void require_estimable(const Dataset& data, const StrataStats& stats);

}  // namespace qte
