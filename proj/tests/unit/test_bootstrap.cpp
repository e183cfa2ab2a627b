#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "qte/bootstrap.hpp"
#include "qte/dgp.hpp"
#include "qte/error.hpp"
#include "qte/numeric.hpp"
#include "qte/randomization.hpp"

using namespace qte;

namespace {

struct Observed {
  Dataset data;
  StrataStats stats;
};

Observed dgp1_sample(std::size_t n, std::uint64_t seed) {
  DgpSpec spec;
  spec.n = n;
  Rng rng = make_rng(seed, {1});
  const PotentialData pot = generate(spec, rng);
  Rng arng = make_rng(seed, {2});
  SchemeSpec sbr;
  sbr.kind = SchemeKind::sbr;
  const Dataset d = pot.observe(assign(pot.s, sbr, arng));
  return {d, index_strata(d, WeightVector::unit(d.n()))};
}

double sd(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_SUITE("bootstrap") {
  TEST_CASE("exponential weights are nonnegative with unit mean and variance") {
    Rng rng = make_rng(1);
    const std::size_t n = 100000;
    const WeightVector w = draw_weights(n, rng);
    CHECK(w.kind == WeightKind::bootstrap);
    double mean = 0.0, var = 0.0;
    for (double v : w.w) {
      CHECK_MESSAGE(v >= 0.0, "negative weight");
      mean += v;
    }
    mean /= n;
    for (double v : w.w) var += (v - mean) * (v - mean);
    var /= n - 1;
    // Var of (xi - 1)^2 for Exp(1) is E(xi-1)^4 - 1 = 9 - 1 = 8.
    const double se_mean = 1.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - 1.0) <= 3.0 * se_mean);
    CHECK(std::abs(var - 1.0) <= 3.0 * se_mean * std::sqrt(8.0));
    Rng again = make_rng(1);
    CHECK(draw_weights(n, again).w == w.w);
  }

  TEST_CASE("fixed seed gives a deterministic draw matrix independent of threads") {
    const Observed o = dgp1_sample(200, 3);
    const QuantileGrid grid({0.25, 0.5, 0.75});
    const AdjustmentModel none = fit_none(grid, o.data.num_strata(), o.data.dim());
    BootstrapOptions opt;
    opt.B = 3;
    opt.seed = 99;
    const BootstrapDraws a = run_bootstrap(o.data, o.stats, none, grid, opt);
    opt.threads = 4;
    const BootstrapDraws b = run_bootstrap(o.data, o.stats, none, grid, opt);
    CHECK(a.draws.rows() == 3);
    CHECK(a.draws.cols() == 3);
    CHECK(a.draws == b.draws);
  }

  TEST_CASE("unit weights reproduce the point estimate in every draw") {
    const Observed o = dgp1_sample(200, 4);
    const QuantileGrid grid({0.25, 0.5, 0.75});
    const PilotQuantiles pilot = pilot_quantiles(o.data, o.stats, grid);
    const AdjustmentModel lp = fit_lp(o.data, o.stats, pilot, grid, FeatureMap::raw(2, false));
    const QteEstimate est = estimate_qte(o.data, o.stats, lp, grid, WeightVector::unit(o.data.n()));
    BootstrapOptions opt;
    opt.B = 5;
    opt.weight_generator = [](std::size_t n, Rng&) { return WeightVector::bootstrap(std::vector<double>(n, 1.0)); };
    const BootstrapDraws d = run_bootstrap(o.data, o.stats, lp, grid, opt);
    for (Eigen::Index b = 0; b < 5; ++b) {
      for (std::size_t k = 0; k < grid.size(); ++k) CHECK(d.draws(b, static_cast<Eigen::Index>(k)) == est.qte[k]);
    }
    const UniformBand band = uniform_band(est, d, grid.taus(), 0.05);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(band.upper[k] == band.lower[k]);
    const InferenceResult r = pointwise_test(est.qte[1], d.column(1), est.qte[1], 0.05);
    CHECK(r.ci_lower == r.ci_upper);
  }

  TEST_CASE("NA bootstrap matches a from-scratch weighted-quantile bootstrap") {
    const Observed o = dgp1_sample(300, 21);
    const QuantileGrid grid({0.25, 0.5, 0.75});
    BootstrapOptions opt;
    opt.B = 40;
    opt.seed = 77;
    const BootstrapDraws bd =
        run_bootstrap(o.data, o.stats, fit_none(grid, o.data.num_strata(), o.data.dim()), grid, opt);
    REQUIRE(bd.redraws == 0);
    for (std::size_t b = 0; b < 40; ++b) {
      Rng rng = make_rng(77, {b, 0});
      const WeightVector w = draw_weights(o.data.n(), rng);
      const StrataStats ws = index_strata(o.data, w);
      // Arm-a masses w_i / share_w(s), smallest outcome reaching tau of the total.
      auto arm_quantile = [&](int arm, double tau) {
        std::vector<std::pair<double, double>> pts;
        double total = 0.0;
        for (std::size_t i = 0; i < o.data.n(); ++i) {
          if (o.data.a(i) != arm) continue;
          const double p = ws.pi_hat_w[static_cast<std::size_t>(o.data.stratum(i))];
          const double mass = w.w[i] / (arm == 1 ? p : 1.0 - p);
          pts.emplace_back(o.data.y(i), mass);
          total += mass;
        }
        std::sort(pts.begin(), pts.end());
        double cum = 0.0;
        for (const auto& [y, m] : pts) {
          cum += m;
          if (cum >= tau * total - 1e-10 * std::max(1.0, total)) return y;
        }
        return pts.back().first;
      };
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const Eigen::Index bi = static_cast<Eigen::Index>(b), ki = static_cast<Eigen::Index>(k);
        CHECK(bd.draws(bi, ki) == doctest::Approx(arm_quantile(1, grid[k]) - arm_quantile(0, grid[k])));
      }
    }
  }

  TEST_CASE("degenerate draws are redrawn and counted") {
    const Observed o = dgp1_sample(100, 5);
    const QuantileGrid grid({0.5});
    const AdjustmentModel none = fit_none(grid, o.data.num_strata(), o.data.dim());
    BootstrapOptions opt;
    opt.B = 4;
    // First attempt of each draw zeroes the treated units.
    const Dataset& data = o.data;
    opt.weight_generator = [&data](std::size_t n, Rng& rng) {
      WeightVector w = draw_weights(n, rng);
      std::uniform_real_distribution<double> u;
      if (u(rng) < 0.5) {
        for (std::size_t i = 0; i < n; ++i) {
          if (data.a(i) == 1) w.w[i] = 0.0;
        }
      }
      return w;
    };
    const BootstrapDraws d = run_bootstrap(o.data, o.stats, none, grid, opt);
    CHECK(d.redraws > 0);
    CHECK(d.draws.allFinite());
  }

  TEST_CASE("draw spread shrinks at the root-n rate") {
    std::vector<double> sd200, sd800;
    const QuantileGrid grid({0.5});
    for (int r = 0; r < 50; ++r) {
      for (std::size_t n : {200u, 800u}) {
        const Observed o = dgp1_sample(n, 1000 + static_cast<std::uint64_t>(r));
        BootstrapOptions opt;
        opt.B = 200;
        opt.seed = static_cast<std::uint64_t>(r);
        const BootstrapDraws d = run_bootstrap(o.data, o.stats, fit_none(grid, o.data.num_strata(), 2), grid, opt);
        (n == 200 ? sd200 : sd800).push_back(sd(d.column(0)));
      }
    }
    double a = 0.0, b = 0.0;
    for (double v : sd200) a += v;
    for (double v : sd800) b += v;
    const double ratio = b / a;
    CHECK(ratio >= 0.4);
    CHECK(ratio <= 0.6);
  }

  TEST_CASE("bootstrap_se recovers the normal scale and is affine equivariant") {
    Rng rng = make_rng(21);
    std::normal_distribution<double> nd;
    std::vector<double> z(1000000);
    for (double& v : z) v = nd(rng);
    const double se = bootstrap_se(z);
    CHECK(std::abs(se - 1.0) <= 0.01);
    std::vector<double> t(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) t[i] = -3.0 * z[i] + 7.0;
    CHECK(bootstrap_se(t) == doctest::Approx(3.0 * se).epsilon(1e-9));
    CHECK(bootstrap_se(std::vector<double>(10, 4.2)) == 0.0);
    CHECK_THROWS_AS(bootstrap_se(std::vector<double>{1.0}), UsageError);
  }

  TEST_CASE("bootstrap_se uses type-7 interpolation") {
    std::vector<double> v;
    for (int i = 0; i <= 40; ++i) v.push_back(i);
    // ranks 0.025*40+1 = 2 and 0.975*40+1 = 40, values 1 and 39.
    CHECK(bootstrap_se(v) == doctest::Approx(38.0 / (2.0 * 1.959963984540054)));
  }

  TEST_CASE("pointwise test decisions and interval") {
    // Draws with se exactly 1: a normal-quantile-spaced grid.
    std::vector<double> draws;
    const int B = 2001;
    for (int b = 0; b < B; ++b) draws.push_back(normal_quantile((b + 0.5) / B));
    const double se = bootstrap_se(draws);
    const InferenceResult same = pointwise_test(1.0, draws, 1.0, 0.05);
    CHECK_FALSE(same.reject);
    CHECK(same.statistic == 0.0);
    const InferenceResult far = pointwise_test(2.5 * se, draws, 0.0, 0.05);
    CHECK(far.statistic == doctest::Approx(2.5));
    CHECK(far.reject);
    const InferenceResult near = pointwise_test(1.9 * se, draws, 0.0, 0.05);
    CHECK_FALSE(near.reject);
    CHECK(far.ci_upper - far.estimate == doctest::Approx(far.estimate - far.ci_lower).epsilon(1e-12));
    CHECK(far.critical_value == doctest::Approx(1.959963984540054));
    const InferenceResult z = pointwise_test(1.0, std::vector<double>(5, 1.0), 0.0, 0.05);
    CHECK(z.zero_se);
    CHECK(z.reject);
  }

  TEST_CASE("difference test reduces to the pointwise test on per-draw differences") {
    Rng rng = make_rng(31);
    std::normal_distribution<double> nd;
    BootstrapDraws d;
    d.grid = QuantileGrid({0.25, 0.75});
    d.B = 500;
    d.draws.resize(500, 2);
    for (Eigen::Index b = 0; b < 500; ++b) {
      d.draws(b, 0) = nd(rng);
      d.draws(b, 1) = 0.5 * d.draws(b, 0) + nd(rng);
    }
    QteEstimate est{{0.25, 0.75}, {0, 0}, {0, 0}, {0.3, 1.1}};
    const InferenceResult r = difference_test(est, d, 0.75, 0.25, 0.0, 0.05);
    std::vector<double> diff;
    for (Eigen::Index b = 0; b < 500; ++b) diff.push_back(d.draws(b, 1) - d.draws(b, 0));
    const InferenceResult direct = pointwise_test(0.8, diff, 0.0, 0.05);
    CHECK(r.se == direct.se);
    CHECK(r.reject == direct.reject);
    CHECK(r.estimate == doctest::Approx(0.8));

    // Perfectly correlated shifted copies: the difference has no spread.
    for (Eigen::Index b = 0; b < 500; ++b) d.draws(b, 1) = d.draws(b, 0) + 2.0;
    CHECK(difference_test(est, d, 0.75, 0.25, 0.0, 0.05).se == doctest::Approx(0.0).epsilon(1e-12));
    const InferenceResult same = difference_test(est, d, 0.25, 0.25, 0.0, 0.05);
    CHECK(same.estimate == 0.0);
    CHECK(same.se == 0.0);
    CHECK(same.zero_se);
  }

  TEST_CASE("uniform band on constant columns collapses to the estimate") {
    Eigen::MatrixXd draws(100, 3);
    for (Eigen::Index k = 0; k < 3; ++k) draws.col(k).setConstant(static_cast<double>(k));
    const std::vector<double> taus{0.25, 0.5, 0.75}, est{0.0, 1.0, 2.0};
    const UniformBand b = uniform_band(taus, est, draws, 0.05);
    CHECK(b.critical_value == 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(b.lower[k] == est[k]);
      CHECK(b.upper[k] == est[k]);
      CHECK_FALSE(b.included[k]);
    }
    CHECK(b.warnings.size() == 3);
  }

  TEST_CASE("uniform critical value matches a direct max-of-Gaussians simulation") {
    Rng rng = make_rng(41);
    std::normal_distribution<double> nd;
    const std::size_t B = 1000, G = 11;
    Eigen::MatrixXd draws(B, G);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < G; ++k) draws(b, k) = nd(rng);
    }
    std::vector<double> taus, est(G, 0.0);
    for (std::size_t k = 0; k < G; ++k) taus.push_back(0.25 + 0.05 * k);
    const UniformBand band = uniform_band(taus, est, draws, 0.05);
    CHECK(band.critical_value >= 2.2);
    CHECK(band.critical_value <= 3.2);

    // Oracle: 95% quantile of max_k |Z_k| over 200000 direct draws.
    std::vector<double> mx(200000);
    for (double& m : mx) {
      m = 0.0;
      for (std::size_t k = 0; k < G; ++k) m = std::max(m, std::abs(nd(rng)));
    }
    std::sort(mx.begin(), mx.end());
    const double oracle = mx[static_cast<std::size_t>(0.95 * mx.size())];
    CHECK(std::abs(band.critical_value - oracle) < 0.2);

    // Non-increasing in alpha.
    double prev = INFINITY;
    for (double a : {0.01, 0.05, 0.1, 0.2, 0.5}) {
      const double c = uniform_band(taus, est, draws, a).critical_value;
      CHECK(c <= prev);
      prev = c;
    }
  }

  TEST_CASE("single-point band uses the empirical quantile of studentized draws") {
    Rng rng = make_rng(43);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd draws(400, 1);
    for (Eigen::Index b = 0; b < 400; ++b) draws(b, 0) = 2.0 * nd(rng) + 1.0;
    std::vector<double> col(draws.data(), draws.data() + 400);
    const double se = bootstrap_se(col);
    const double med = empirical_quantile(col, 0.5);
    std::vector<double> t;
    for (double v : col) t.push_back(std::abs(v - med) / se);
    std::sort(t.begin(), t.end());
    const UniformBand b = uniform_band(std::vector<double>{0.5}, std::vector<double>{1.0}, draws, 0.1);
    CHECK(b.critical_value == t[359]);  // ceil(0.9 * 400) = 360th order statistic
  }

  TEST_CASE("band rejection is invariant to a common shift of draws, estimate and null") {
    Rng rng = make_rng(47);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd draws(300, 4);
    for (Eigen::Index b = 0; b < 300; ++b) {
      for (Eigen::Index k = 0; k < 4; ++k) draws(b, k) = nd(rng);
    }
    const std::vector<double> taus{0.2, 0.4, 0.6, 0.8}, est{0.1, 0.2, -0.1, 0.0};
    for (double null : {0.0, 1.0, 2.5, 4.0}) {
      const std::vector<double> nulls(4, null);
      const UniformBand a = uniform_band(taus, est, draws, 0.05, nulls);
      Eigen::MatrixXd shifted = draws.array() + 10.0;
      const std::vector<double> est2{10.1, 10.2, 9.9, 10.0}, nulls2(4, null + 10.0);
      const UniformBand b = uniform_band(taus, est2, shifted, 0.05, nulls2);
      CHECK(a.reject == b.reject);
    }
  }
}
