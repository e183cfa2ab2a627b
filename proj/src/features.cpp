#include "qte/features.hpp"

#include <cmath>
#include <sstream>

#include "qte/error.hpp"
#include "qte/numeric.hpp"

namespace qte {
namespace {

std::string xname(std::size_t j) { return "x" + std::to_string(j + 1); }

std::string factor_name(const Factor& f) {
  std::ostringstream os;
  os.precision(6);
  switch (f.op) {
    case Factor::Op::power:
      os << xname(f.column);
      if (f.degree != 1) os << '^' << f.degree;
      break;
    case Factor::Op::indicator_above:
      os << "1{" << xname(f.column) << '>' << f.threshold << '}';
      break;
    case Factor::Op::truncated_power:
      os << "(" << xname(f.column) << '-' << f.threshold << ")+";
      if (f.degree != 1) os << '^' << f.degree;
      break;
  }
  return os.str();
}

Term make_term(std::vector<Factor> factors) {
  Term t;
  t.factors = std::move(factors);
  if (t.factors.empty()) {
    t.name = "1";
  } else {
    for (std::size_t k = 0; k < t.factors.size(); ++k) {
      if (k) t.name += '*';
      t.name += factor_name(t.factors[k]);
    }
  }
  return t;
}

Factor power(std::size_t col, int degree) { return {col, Factor::Op::power, degree, 0.0}; }

std::vector<double> column_values(const Eigen::MatrixXd& x, std::size_t j) {
  std::vector<double> v(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) v[static_cast<std::size_t>(i)] = x(i, static_cast<Eigen::Index>(j));
  return v;
}

// Univariate basis for one covariate; element 0 is always the constant.
std::vector<std::vector<Factor>> univariate_basis(const Eigen::MatrixXd& x, std::size_t j, const SieveSpec& spec) {
  std::vector<std::vector<Factor>> basis{{}};
  if (spec.basis == SieveSpec::Basis::polynomial) {
    if (spec.order < 1) throw UsageError("polynomial sieve degree must be at least 1");
    for (int k = 1; k <= spec.order; ++k) basis.push_back({power(j, k)});
    return basis;
  }
  if (spec.order < 2) throw UsageError("spline order must be at least 2");
  for (int k = 1; k <= spec.order - 1; ++k) basis.push_back({power(j, k)});
  const auto values = column_values(x, j);
  for (std::size_t m = 1; m <= spec.knots; ++m) {
    const double t = empirical_quantile(values, static_cast<double>(m) / static_cast<double>(spec.knots + 1));
    basis.push_back({Factor{j, Factor::Op::truncated_power, spec.order - 1, t}});
  }
  return basis;
}

}  // namespace

double Factor::operator()(double x) const {
  switch (op) {
    case Op::power: return degree == 1 ? x : std::pow(x, degree);
    case Op::indicator_above: return x > threshold ? 1.0 : 0.0;
    case Op::truncated_power: {
      const double d = x - threshold;
      if (d <= 0.0) return 0.0;
      return degree == 1 ? d : std::pow(d, degree);
    }
  }
  return 0.0;
}

FeatureMap::FeatureMap(FeatureKind kind, std::size_t input_dim, std::vector<Term> terms)
    : kind_(kind), input_dim_(input_dim), terms_(std::move(terms)) {
  for (const auto& t : terms_) {
    for (const auto& f : t.factors) {
      if (f.column >= input_dim_) throw UsageError("feature term refers to covariate beyond input width");
    }
  }
}

FeatureMap FeatureMap::raw(std::size_t dim, bool intercept) {
  std::vector<Term> terms;
  if (intercept) terms.push_back(make_term({}));
  for (std::size_t j = 0; j < dim; ++j) terms.push_back(make_term({power(j, 1)}));
  return {FeatureKind::raw, dim, std::move(terms)};
}

FeatureMap FeatureMap::with_interactions(std::size_t dim) {
  std::vector<Term> terms{make_term({})};
  for (std::size_t j = 0; j < dim; ++j) terms.push_back(make_term({power(j, 1)}));
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t k = j + 1; k < dim; ++k) terms.push_back(make_term({power(j, 1), power(k, 1)}));
  }
  return {FeatureKind::with_interactions, dim, std::move(terms)};
}

FeatureMap FeatureMap::hd_dictionary(std::size_t dim) {
  FeatureMap m = raw(dim, true);
  m.kind_ = FeatureKind::hd_dictionary;
  return m;
}

std::size_t FeatureMap::intercept_index() const noexcept {
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (terms_[k].is_intercept()) return k;
  }
  return terms_.size();
}

void FeatureMap::evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& row, Eigen::Ref<Eigen::VectorXd> out) const {
  if (static_cast<std::size_t>(row.size()) != input_dim_) {
    throw UsageError("covariate row width " + std::to_string(row.size()) + " does not match feature map width " +
                     std::to_string(input_dim_));
  }
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    double v = 1.0;
    for (const auto& f : terms_[k].factors) v *= f(row(static_cast<Eigen::Index>(f.column)));
    out(static_cast<Eigen::Index>(k)) = v;
  }
}

Eigen::VectorXd FeatureMap::evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(terms_.size()));
  evaluate(row, out);
  return out;
}

Eigen::MatrixXd FeatureMap::design(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h(x.rows(), static_cast<Eigen::Index>(terms_.size()));
  Eigen::VectorXd buf(static_cast<Eigen::Index>(terms_.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    evaluate(x.row(i), buf);
    h.row(i) = buf.transpose();
  }
  return h;
}

std::vector<std::string> FeatureMap::names() const {
  std::vector<std::string> out;
  out.reserve(terms_.size());
  for (const auto& t : terms_) out.push_back(t.name);
  return out;
}

FeatureMap build_sieve_map(const Eigen::MatrixXd& x, const SieveSpec& spec) {
  const auto d = static_cast<std::size_t>(x.cols());
  if (x.rows() < 1) throw UsageError("sieve construction needs at least one row");
  if (spec.basis == SieveSpec::Basis::interaction_threshold) {
    if (d < 2) throw UsageError("the interaction-threshold sieve needs at least two covariates");
    const double t1 = empirical_quantile(column_values(x, 0), 0.5);
    const double t2 = empirical_quantile(column_values(x, 1), 0.5);
    std::vector<Term> terms{make_term({}), make_term({power(0, 1)}), make_term({power(1, 1)}),
                            make_term({power(0, 1), power(1, 1)}),
                            make_term({power(0, 1), Factor{0, Factor::Op::indicator_above, 1, t1}, power(1, 1),
                                       Factor{1, Factor::Op::indicator_above, 1, t2}})};
    return {FeatureKind::sieve, d, std::move(terms)};
  }

  std::vector<std::vector<std::vector<Factor>>> bases;
  for (std::size_t j = 0; j < d; ++j) bases.push_back(univariate_basis(x, j, spec));

  std::vector<Term> terms;
  if (spec.tensor) {
    std::vector<std::vector<Factor>> products{{}};
    for (const auto& basis : bases) {
      std::vector<std::vector<Factor>> next;
      for (const auto& p : products) {
        for (const auto& b : basis) {
          auto q = p;
          q.insert(q.end(), b.begin(), b.end());
          next.push_back(std::move(q));
        }
      }
      products = std::move(next);
    }
    for (auto& p : products) terms.push_back(make_term(std::move(p)));
  } else {
    terms.push_back(make_term({}));
    for (const auto& basis : bases) {
      for (std::size_t k = 1; k < basis.size(); ++k) terms.push_back(make_term(basis[k]));
    }
  }
  return {FeatureKind::sieve, d, std::move(terms)};
}

}  // namespace qte
