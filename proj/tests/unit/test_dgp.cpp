#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>

#include "qte/dgp.hpp"
#include "qte/error.hpp"
#include "qte/numeric.hpp"

using namespace qte;

TEST_SUITE("dgp") {
  TEST_CASE("noise-free outcome equation of design (i)") {
    const Eigen::Vector2d x(0.0, 0.0);
    const UnitOutcomes u = unit_outcomes(DgpKind::dgp1, 4.0, 0.0, x, 0.0, 0.0);
    CHECK(u.y1 == 2.0);
    CHECK(u.y0 == 1.0);
    const Eigen::Vector2d x2(1.0, -1.0);
    const UnitOutcomes v = unit_outcomes(DgpKind::dgp1, 4.0, 0.5, x2, 1.0, 2.0);
    // alpha = 0, gamma z = 2, mu = 1, eta1 = 1.25, eta0 = 2.
    CHECK(v.y1 == doctest::Approx(4.25));
    CHECK(v.y0 == doctest::Approx(4.0));
  }

  TEST_CASE("stratum rule counts the cuts at or above z") {
    CHECK(stratum_of(DgpKind::dgp1, 0.0) == 3);
    CHECK(stratum_of(DgpKind::dgp1, -10.0) == 4);
    CHECK(stratum_of(DgpKind::dgp1, 10.0) == 0);
    CHECK(stratum_of(DgpKind::dgp2, 1.0) == 2);
    CHECK(stratum_of(DgpKind::hd, std::sqrt(5.0)) == 1);
  }

  TEST_CASE("generated designs stay in their supports") {
    for (DgpKind k : {DgpKind::dgp1, DgpKind::dgp2, DgpKind::hd}) {
      DgpSpec spec;
      spec.kind = k;
      spec.n = 2000;
      Rng rng = make_rng(3);
      const PotentialData p = generate(spec, rng);
      CHECK(p.n() == 2000);
      std::set<int> seen(p.s.begin(), p.s.end());
      for (int s : seen) CHECK((s >= 0 && s <= 4));
      CHECK(p.x.cols() == (k == DgpKind::hd ? 20 : 2));
      // Standardized Beta(2,2) lives on [-sqrt(5), sqrt(5)].
      if (k != DgpKind::dgp2) CHECK(p.z.cwiseAbs().maxCoeff() <= std::sqrt(5.0) + 1e-12);
      for (Eigen::Index i = 0; i < 50; ++i) {
        const UnitOutcomes u = unit_outcomes(k, spec.gamma, p.z(i), p.x.row(i).transpose(), p.eps1(i), p.eps2(i));
        CHECK(u.y1 == p.y1(i));
        CHECK(u.y0 == p.y0(i));
      }
    }
  }

  TEST_CASE("observed outcomes are reconstructed from the assignment") {
    DgpSpec spec;
    spec.n = 10;
    Rng rng = make_rng(4);
    const PotentialData p = generate(spec, rng);
    std::vector<int> a{1, 0, 1, 1, 0, 0, 1, 0, 1, 0};
    const Dataset d = p.observe(a);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(d.y(i) == (a[i] ? p.y1(static_cast<Eigen::Index>(i)) : p.y0(static_cast<Eigen::Index>(i))));
    }
  }

  TEST_CASE("high-dimensional covariates follow the Toeplitz correlation") {
    const Eigen::MatrixXd om = toeplitz_covariance(20, 0.5);
    CHECK(om(0, 2) == 0.25);
    CHECK(om.llt().info() == Eigen::Success);
    DgpSpec spec;
    spec.kind = DgpKind::hd;
    spec.n = 100000;
    Rng rng = make_rng(5);
    const PotentialData p = generate(spec, rng);
    // X = Phi(W); invert to recover W.
    Eigen::VectorXd w1(p.x.rows()), w3(p.x.rows());
    for (Eigen::Index r = 0; r < p.x.rows(); ++r) {
      w1(r) = normal_quantile(p.x(r, 0));
      w3(r) = normal_quantile(p.x(r, 2));
    }
    const double want = 0.25;
    const double m1 = w1.mean(), m3 = w3.mean();
    const double c = ((w1.array() - m1) * (w3.array() - m3)).mean() /
                     std::sqrt((w1.array() - m1).square().mean() * (w3.array() - m3).square().mean());
    // Standard error of a sample correlation is about (1 - rho^2) / sqrt(n).
    CHECK(std::abs(c - want) < 3.0 * (1.0 - want * want) / std::sqrt(static_cast<double>(p.n())));
  }

  TEST_CASE("oracle is deterministic and independent of thread count") {
    DgpSpec spec;
    const QuantileGrid grid({0.25, 0.5});
    const auto a = true_qte_oracle(spec, grid, 500, 2, 9, 1);
    const auto b = true_qte_oracle(spec, grid, 500, 2, 9, 3);
    CHECK(a == b);
  }

  TEST_CASE("oracle recovers a constant shift with symmetric noise") {
    const double c = 2.5;
    PotentialSampler sampler = [c](std::size_t n, Rng& rng) {
      std::normal_distribution<double> nd;
      PotentialData p;
      p.z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      p.s.assign(n, 0);
      p.x = Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0);
      p.eps1.resize(static_cast<Eigen::Index>(n));
      p.eps2.resize(static_cast<Eigen::Index>(n));
      p.y1.resize(static_cast<Eigen::Index>(n));
      p.y0.resize(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        p.eps1(r) = nd(rng);
        p.eps2(r) = nd(rng);
        p.y1(r) = c + 2.0 * p.eps1(r);
        p.y0(r) = p.eps2(r);
      }
      return p;
    };
    const auto t = true_qte_oracle(sampler, QuantileGrid({0.5}), 10000, 50, 1);
    CHECK(std::abs(t[0] - c) < 0.03);
  }

  TEST_CASE("truth cache stores, reloads and reuses entries") {
    char path[] = "/tmp/qte_truth_XXXXXX";
    const int fd = mkstemp(path);
    REQUIRE(fd >= 0);
    std::remove(path);
    const OracleConfig cfg{400, 3, 11};
    DgpSpec spec;
    const QuantileGrid grid({0.3, 0.7});
    std::vector<double> first;
    {
      TruthCache cache(path);
      first = cached_true_qte(spec, grid, cfg, &cache, 1);
      CHECK(cache.size() == 2);
      cache.save();
    }
    TruthCache again(path);
    CHECK(again.size() == 2);
    CHECK(again.lookup(DgpKind::dgp1, 0.3, cfg) == first[0]);
    CHECK(!again.lookup(DgpKind::dgp2, 0.3, cfg));
    CHECK(cached_true_qte(spec, grid, cfg, &again, 1) == first);
    std::remove(path);
  }

  TEST_CASE("parse names") {
    CHECK(parse_dgp("i") == DgpKind::dgp1);
    CHECK(parse_dgp("hd") == DgpKind::hd);
    CHECK_THROWS_AS(parse_dgp("3"), UsageError);
  }
}
