#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "qte/csv.hpp"
#include "qte/data.hpp"
#include "qte/error.hpp"
#include "qte/numeric.hpp"
#include "qte/parallel.hpp"
#include "qte/rng.hpp"

using namespace qte;

TEST_SUITE("numeric") {
  TEST_CASE("type-7 quantile interpolates between order statistics") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    CHECK(sorted_quantile(v, 0.0) == 1.0);
    CHECK(sorted_quantile(v, 1.0) == 5.0);
    CHECK(sorted_quantile(v, 0.5) == 3.0);
    CHECK(sorted_quantile(v, 0.1) == doctest::Approx(1.4));
    CHECK(empirical_quantile(std::vector<double>{5, 1, 4, 2, 3}, 0.75) == 4.0);
  }

  TEST_CASE("inverse-CDF quantile picks the smallest order statistic reaching tau") {
    std::vector<double> v{4, 1, 3, 2};
    CHECK(inverse_cdf_quantile(v, 0.5) == 2.0);
    CHECK(inverse_cdf_quantile(v, 0.51) == 3.0);
    CHECK(inverse_cdf_quantile(v, 0.25) == 1.0);
  }

  TEST_CASE("normal cdf and quantile are inverse to each other") {
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    for (double p : {1e-6, 0.01, 0.3, 0.5, 0.9, 0.999}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p));
  }

  TEST_CASE("compensated sum is exact on cancelling terms") {
    CompensatedSum s;
    s.add(1e16);
    s.add(1.0);
    s.add(-1e16);
    CHECK(s.value() == 1.0);
  }

  TEST_CASE("logistic is stable in the tails") {
    CHECK(logistic(0.0) == 0.5);
    CHECK(logistic(800.0) == 1.0);
    CHECK(logistic(-800.0) >= 0.0);
    CHECK(logistic(-3.0) == doctest::Approx(1.0 - logistic(3.0)));
  }

  TEST_CASE("derived streams differ by tag and parallel_for covers every index") {
    CHECK(derive_seed(1, {0}) != derive_seed(1, {1}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
  }
}

TEST_SUITE("data") {
  TEST_CASE("integer labels are ordered numerically, others lexicographically") {
    const Dataset d = Dataset::from_labels(Eigen::VectorXd::Ones(4), {1, 0, 1, 0}, {"10", "9", "10", "9"},
                                           Eigen::MatrixXd(4, 0));
    CHECK(d.label(0) == "9");
    CHECK(d.label(1) == "10");
    CHECK(d.stratum(0) == 1);
    const Dataset e = Dataset::from_labels(Eigen::VectorXd::Ones(2), {1, 0}, {"b", "a"}, Eigen::MatrixXd(2, 0));
    CHECK(e.label(0) == "a");
    CHECK(e.stratum_id("b") == 1);
    CHECK(!e.stratum_id("c"));
  }

  TEST_CASE("stratum statistics count arms, imbalance and weighted shares") {
    const Dataset d = Dataset::from_strata(Eigen::VectorXd::Zero(6), {1, 1, 0, 1, 0, 0}, {0, 0, 0, 1, 1, 1},
                                           Eigen::MatrixXd(6, 0));
    const StrataStats st = index_strata(d, WeightVector::unit(6), 0.5);
    CHECK(st.n == std::vector<std::size_t>{3, 3});
    CHECK(st.n1 == std::vector<std::size_t>{2, 1});
    CHECK(st.pi_hat[0] == doctest::Approx(2.0 / 3.0));
    CHECK(st.imbalance[0] == doctest::Approx(0.5));
    CHECK(st.imbalance[1] == doctest::Approx(-0.5));
    CHECK(st.pi_hat_w == st.pi_hat);
    const StrataStats ws = index_strata(d, WeightVector::bootstrap({1, 3, 1, 2, 1, 1}), 0.5);
    CHECK(ws.n1w[0] == 4.0);
    CHECK(ws.pi_hat_w[0] == doctest::Approx(0.8));
    CHECK(ws.pi_hat[0] == doctest::Approx(2.0 / 3.0));
    CHECK(validate_for_estimation(st).empty());
  }

  TEST_CASE("weighted counts follow the weights") {
    const Dataset d = Dataset::from_strata(Eigen::VectorXd::Zero(2), {1, 0}, {1, 1}, Eigen::MatrixXd(2, 0));
    const StrataStats st = index_strata(d, WeightVector::bootstrap({2, 1}), 0.5);
    CHECK(st.n1w[0] == 2.0);
    CHECK(st.nw[0] == 3.0);
    CHECK(st.pi_hat_w[0] == doctest::Approx(2.0 / 3.0));
    CHECK(st.weight_total == 3.0);
    // All-ones bootstrap weights reproduce the unit-weight statistics.
    const StrataStats u = index_strata(d, WeightVector::unit(2), 0.5);
    const StrataStats o = index_strata(d, WeightVector::bootstrap({1, 1}), 0.5);
    CHECK(u.nw == o.nw);
    CHECK(u.pi_hat_w == o.pi_hat_w);
    CHECK(u.imbalance == o.imbalance);
  }

  TEST_CASE("a zero-weight arm is flagged") {
    const Dataset d =
        Dataset::from_strata(Eigen::VectorXd::Zero(4), {1, 0, 1, 0}, {0, 0, 1, 1}, Eigen::MatrixXd(4, 0));
    const StrataStats st = index_strata(d, WeightVector::bootstrap({1, 1, 0, 2}), 0.5);
    CHECK(validate_for_estimation(st) == std::vector<int>{1});
  }

  TEST_CASE("a stratum without controls is reported") {
    const Dataset d =
        Dataset::from_strata(Eigen::VectorXd::Zero(4), {1, 0, 1, 1}, {0, 0, 1, 1}, Eigen::MatrixXd(4, 0));
    const StrataStats st = index_strata(d, WeightVector::unit(4));
    CHECK(validate_for_estimation(st) == std::vector<int>{1});
    CHECK_THROWS_AS(require_estimable(d, st), DegenerateCellError);
  }

  TEST_CASE("quantile grid validation and lookup") {
    CHECK_THROWS_AS(QuantileGrid({0.5, 0.5}), UsageError);
    CHECK_THROWS_AS(QuantileGrid({0.0}), UsageError);
    CHECK_THROWS_AS(QuantileGrid(std::vector<double>{}), UsageError);
    const QuantileGrid g = QuantileGrid::linspace(0.25, 0.75, 11);
    CHECK(g.size() == 11);
    CHECK(g.index_of(0.55) == std::optional<std::size_t>(6));
    CHECK(!g.index_of(0.56));
  }

  TEST_CASE("malformed datasets are rejected") {
    CHECK_THROWS_AS(Dataset::from_strata(Eigen::VectorXd::Zero(2), {1, 2}, {0, 0}, Eigen::MatrixXd(2, 0)),
                    DataError);
    Eigen::VectorXd y(2);
    y << 1.0, NAN;
    CHECK_THROWS_AS(Dataset::from_strata(y, {1, 0}, {0, 0}, Eigen::MatrixXd(2, 0)), DataError);
    CHECK_THROWS_AS(WeightVector::bootstrap({1.0, -1.0}), DataError);
  }
}

TEST_SUITE("csv") {
  TEST_CASE("reads outcome, treatment, stratum and covariates") {
    std::istringstream in("y,a,s,age,income\n1.5,1,north,30,2.5\n2,0,south,40,3\n-1,1,north,50,1\n");
    const Dataset d = read_dataset_csv(in);
    CHECK(d.n() == 3);
    CHECK(d.dim() == 2);
    CHECK(d.covariate_names() == std::vector<std::string>{"age", "income"});
    CHECK(d.label(d.stratum(1)) == "south");
    CHECK(d.x()(2, 0) == 50.0);
  }

  TEST_CASE("schema problems name the column") {
    auto fails_with = [](const std::string& text, const std::string& needle) {
      std::istringstream in(text);
      try {
        read_dataset_csv(in);
      } catch (const DataError& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
      }
      return false;
    };
    CHECK(fails_with("y,a\n1,0\n", "'s'"));
    CHECK(fails_with("y,a,s\n1,2,0\n", "'a'"));
    CHECK(fails_with("y,a,s,x\n1,1,0,abc\n", "'x'"));
    CHECK(fails_with("y,a,s\n,1,0\n", "'y'"));
    CHECK(fails_with("", "empty"));
  }

  TEST_CASE("write then read round-trips the data") {
    std::istringstream in("y,a,s,x1\n0.1,1,1,3\n0.2,0,2,4\n");
    const Dataset d = read_dataset_csv(in);
    std::ostringstream out;
    write_dataset_csv(out, d);
    std::istringstream back(out.str());
    const Dataset e = read_dataset_csv(back);
    CHECK(e.y() == d.y());
    CHECK(e.a() == d.a());
    CHECK(e.labels() == d.labels());
    CHECK(e.x() == d.x());
  }

  TEST_CASE("missing file raises an io failure") {
    CHECK_THROWS_AS(read_dataset_csv(std::string("/nonexistent/file.csv")), std::ios_base::failure);
  }
}
