#pragma once

// Regressor maps H(x) for the auxiliary working models. A map is a list of
// terms; each term is a product of univariate factors (powers, threshold
// indicators, truncated powers) of single covariates. The empty product is
// the intercept. Thresholds are frozen when the map is built.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qte {

enum class FeatureKind { raw, with_interactions, sieve, hd_dictionary };

struct Factor {
  enum class Op { power, indicator_above, truncated_power };
  std::size_t column = 0;
  Op op = Op::power;
  int degree = 1;          // power / truncated_power exponent
  double threshold = 0.0;  // indicator_above / truncated_power cut

  double operator()(double x) const;
};

struct Term {
  std::vector<Factor> factors;
  std::string name;
  bool is_intercept() const noexcept { return factors.empty(); }
};

class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(FeatureKind kind, std::size_t input_dim, std::vector<Term> terms);

  // (1, x1, ..., xd) or (x1, ..., xd).
  static FeatureMap raw(std::size_t dim, bool intercept);
  // (1, x1, ..., xd, x_j x_k for j < k).
  static FeatureMap with_interactions(std::size_t dim);
  // (1, x1, ..., xd), the high-dimensional dictionary with raw covariates.
  static FeatureMap hd_dictionary(std::size_t dim);

  FeatureKind kind() const noexcept { return kind_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t size() const noexcept { return terms_.size(); }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  // Position of the intercept term, or size() when there is none.
  std::size_t intercept_index() const noexcept;
  bool has_intercept() const noexcept { return intercept_index() < size(); }

  void evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& row, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  // One row of H per row of x.
  Eigen::MatrixXd design(const Eigen::MatrixXd& x) const;
  std::vector<std::string> names() const;

 private:
  FeatureKind kind_ = FeatureKind::raw;
  std::size_t input_dim_ = 0;
  std::vector<Term> terms_;
};

struct SieveSpec {
  enum class Basis { polynomial, spline, interaction_threshold };
  Basis basis = Basis::interaction_threshold;
  // polynomial: degree J gives (1, x, ..., x^J) per covariate.
  // spline: order r with `knots` interior knots at empirical quantiles gives
  // (1, x, ..., x^{r-1}, (x - t_1)_+^{r-1}, ..., (x - t_J)_+^{r-1}).
  int order = 2;
  std::size_t knots = 1;
  // Full tensor product of the univariate bases; otherwise an additive basis
  // sharing one intercept.
  bool tensor = true;
};

// For interaction_threshold the map is (1, x1, x2, x1 x2,
// x1 1{x1 > t1} x2 1{x2 > t2}) with t the column medians of `x`; it needs at
// least two covariates and uses the first two.
FeatureMap build_sieve_map(const Eigen::MatrixXd& x, const SieveSpec& spec);

}  // namespace qte
