#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fcde/errors.hpp"
#include "fcde/marginal.hpp"
#include "fcde/stats.hpp"

using namespace fcde;
using namespace fcde::marginal;

namespace {

// Inverse-CDF draws written out from the closed form rather than gpd_quantile.
std::vector<double> gpd_draws(std::size_t n, double sigma, double xi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) {
    const double q = 1.0 - u(rng);
    v = xi == 0.0 ? -sigma * std::log(q) : sigma / xi * (std::pow(q, -xi) - 1.0);
  }
  return x;
}

// Body uniform on [0, 1) with probability p_u, GPD excesses above 1 otherwise.
std::vector<double> spliced_draws(std::size_t n, double p_u, double sigma, double xi,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto tail = gpd_draws(n, sigma, xi, seed + 1);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = u(rng) < p_u ? u(rng) : 1.0 + tail[i];
  return x;
}

}  // namespace

TEST_CASE("gpd functions against closed forms") {
  CHECK(gpd_cdf(1.0, 1.0, 0.0) == doctest::Approx(1 - std::exp(-1.0)));
  CHECK(gpd_cdf(2.0, 1.5, 0.2) == doctest::Approx(1 - std::pow(1 + 0.2 * 2 / 1.5, -5.0)));
  CHECK(gpd_cdf(-1.0, 1.0, 0.1) == 0.0);
  CHECK(gpd_cdf(20.0, 1.0, -0.1) == 1.0);  // beyond the end point sigma / -xi = 10
  CHECK(gpd_survival(3.0, 2.0, -0.1) == doctest::Approx(std::pow(1 - 0.1 * 1.5, 10.0)));
  CHECK(gpd_log_density(1.0, 2.0, 0.25) ==
        doctest::Approx(-std::log(2.0) - 5.0 * std::log1p(0.125)));
  for (double xi : {-0.4, -0.1, 0.0, 1e-9, 0.3}) {
    for (double p : {0.01, 0.5, 0.9, 0.999}) {
      CHECK(gpd_cdf(gpd_quantile(p, 1.3, xi), 1.3, xi) == doctest::Approx(p).epsilon(1e-10));
      CHECK(gpd_quantile_upper(1 - p, 1.3, xi) ==
            doctest::Approx(gpd_quantile(p, 1.3, xi)).epsilon(1e-9));
    }
  }
  CHECK(gpd_quantile_upper(1e-300, 1.0, 0.0) == doctest::Approx(300 * std::log(10.0)));
  const std::vector<double> beyond{1.0, 11.0};
  CHECK(gpd_log_likelihood(beyond, 1.0, -0.1) == -INFINITY);
  CHECK(gpd_log_likelihood(beyond, -1.0, 0.1) == -INFINITY);
}

TEST_CASE("density integrates to the cdf") {
  for (double xi : {-0.3, 0.0, 0.2}) {
    const double a = 0.2, b = 2.5;
    const int m = 4000;
    double s = 0.0;
    for (int i = 0; i <= m; ++i) {
      const double x = a + (b - a) * i / m;
      s += (i == 0 || i == m ? 0.5 : 1.0) * std::exp(gpd_log_density(x, 1.1, xi));
    }
    s *= (b - a) / m;
    CHECK(s == doctest::Approx(gpd_cdf(b, 1.1, xi) - gpd_cdf(a, 1.1, xi)).epsilon(1e-6));
  }
}

TEST_CASE("mle recovers generator parameters within 3 se") {
  const auto x = gpd_draws(5000, 1.0, -0.1, 17);
  const auto f = fit_gpd_excesses(x);
  CHECK(f.converged);
  CHECK(std::abs(f.sigma - 1.0) < 3 * f.se_sigma);
  CHECK(std::abs(f.xi + 0.1) < 3 * f.se_xi);
  CHECK(f.upper_endpoint() == doctest::Approx(-f.sigma / f.xi));

  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> ex(5000);
  for (auto& v : ex) v = e(rng);
  const auto fe = fit_gpd_excesses(ex);
  CHECK(std::abs(fe.xi) < 3 * fe.se_xi);

  // The optimum is no worse than the moment start (sigma = mean, xi = 0).
  CHECK(fe.log_likelihood >= gpd_log_likelihood(ex, stats::mean(ex), 0.0));
  CHECK(f.log_likelihood >= gpd_log_likelihood(x, stats::mean(x), 0.0));
}

TEST_CASE("coverage over replicates") {
  int hits = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    const auto f = fit_gpd_excesses(gpd_draws(2000, 0.8, 0.1, 100 + r));
    hits += std::abs(f.sigma - 0.8) < 3 * f.se_sigma && std::abs(f.xi - 0.1) < 3 * f.se_xi;
  }
  CHECK(hits >= reps - 3);
}

TEST_CASE("fit_gpd threshold and errors") {
  const auto x = spliced_draws(4000, 0.7, 1.0, 0.0, 4);
  const auto f = fit_gpd(x, 0.8);
  // The threshold snaps to the largest observation at or below the quantile.
  CHECK(std::find(x.begin(), x.end(), f.u) != x.end());
  CHECK(f.u <= stats::quantile(x, 0.8));
  CHECK(std::abs(f.p_u - 0.8) <= 1.0 / x.size());
  CHECK(f.p_u == doctest::Approx((x.size() - f.n_exc - 0.5) / x.size()));
  CHECK(f.n_exc == static_cast<std::size_t>(std::count_if(x.begin(), x.end(),
                                                          [&](double v) { return v > f.u; })));
  CHECK_THROWS_AS(fit_gpd(std::vector<double>(x.begin(), x.begin() + 50), 0.8), DataError);
  std::vector<double> ten(100);
  for (std::size_t i = 0; i < ten.size(); ++i) ten[i] = static_cast<double>(i);
  CHECK_THROWS_WITH_AS(fit_gpd(ten, 0.9), doctest::Contains("too few exceedances"), DataError);
}

TEST_CASE("marginal model splice, tail values and inverse") {
  const auto x = spliced_draws(5000, 0.7, 1.0, -0.05, 9);
  const auto m = MarginalModel::fit(x, 0.8);
  const auto& g = m.gpd();
  CHECK(m.cdf(g.u) == doctest::Approx(g.p_u).epsilon(1e-12));

  GpdFit exp_tail = g;
  exp_tail.xi = 0.0;
  const MarginalModel e(x, exp_tail);
  CHECK(e.cdf(g.u + g.sigma) ==
        doctest::Approx(g.p_u + (1 - g.p_u) * (1 - std::exp(-1.0))).epsilon(1e-14));

  for (double v = g.u + 0.01; m.survival(v) > 1e-10; v += 0.37) {
    if (m.cdf(v) < 0.999) CHECK(m.quantile(m.cdf(v)) == doctest::Approx(v).epsilon(1e-9));
    CHECK(m.quantile_upper(m.survival(v)) == doctest::Approx(v).epsilon(1e-9));
    CHECK(m.from_laplace(m.to_laplace(v)) == doctest::Approx(v).epsilon(1e-9));
    CHECK(m.survival(v) == doctest::Approx(1 - m.cdf(v)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(m.quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(m.quantile(1.0), std::invalid_argument);
}

TEST_CASE("marginal cdf is monotone and the laplace transform is standard") {
  const auto x = spliced_draws(3000, 0.6, 0.7, 0.1, 21);
  for (auto body : {BodyCdf::Interpolated, BodyCdf::Step}) {
    const auto m = MarginalModel::fit(x, 0.8, body);
    double prev = -1.0;
    for (double v = -0.5; v < 12.0; v += 0.003) {
      const double F = m.cdf(v);
      CHECK(F >= prev);
      prev = F;
    }
  }
  const auto m = MarginalModel::fit(x, 0.8);
  std::vector<double> y;
  for (double v : x) y.push_back(m.to_laplace(v));
  CHECK(stats::ks_one_sample(y, stats::laplace_cdf) < 1.36 / std::sqrt(3000.0));
}

TEST_CASE("laplace transform closed forms") {
  std::vector<double> x(1000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i + 1.0;
  GpdFit g;
  g.u = stats::quantile(x, 0.8);
  g.p_u = 0.8;
  g.sigma = 50;
  const MarginalModel m(x, g);
  CHECK(m.to_laplace(m.quantile(0.75)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(m.to_laplace(m.quantile(0.5)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.to_laplace(m.quantile(0.25)) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  // Far in the tail the transform stays finite because F is clamped.
  CHECK(std::isfinite(m.to_laplace(1e9)));
  CHECK(std::isfinite(m.to_laplace(-1e9)));
}

TEST_CASE("threshold diagnostics") {
  std::mt19937_64 rng(6);
  std::exponential_distribution<double> e(1.0 / 1.5);
  std::vector<double> x(6000);
  for (auto& v : x) v = e(rng);
  const std::vector<double> grid{0.6, 0.7, 0.8, 0.9};
  const auto d = threshold_diagnostics(x, grid, 0, 1);
  REQUIRE(d.candidates.size() == 4);
  for (const auto& c : d.candidates) {
    CHECK_FALSE(c.skipped);
    CHECK(c.mean_excess == doctest::Approx(1.5).epsilon(0.12));
    CHECK(std::isnan(c.sigma_lo));
    CHECK(std::isnan(c.xi_hi));
  }
  const auto csv = format_diagnostics(d);
  CHECK(csv.rfind("quantile,sigma_star,sigma_lo,sigma_hi,xi,xi_lo,xi_hi,mean_excess\n", 0) == 0);

  // GPD data above zero: modified scale and shape stay inside their intervals.
  const auto g = gpd_draws(3000, 1.0, -0.1, 31);
  const auto db = threshold_diagnostics(g, grid, 60, 2);
  for (const auto& c : db.candidates) {
    CHECK(c.sigma_lo <= 1.0);
    CHECK(c.sigma_hi >= 1.0);
    CHECK(c.xi_lo <= -0.1);
    CHECK(c.xi_hi >= -0.1);
  }

  std::vector<double> small(200);
  for (std::size_t i = 0; i < small.size(); ++i) small[i] = i * 0.01;
  const auto ds = threshold_diagnostics(small, std::vector<double>{0.6, 0.9}, 0, 1);
  CHECK_FALSE(ds.candidates[0].skipped);
  CHECK(ds.candidates[1].skipped);

  CHECK_THROWS_AS(threshold_diagnostics(x, std::vector<double>{0.5, 0.6}, 0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(threshold_diagnostics(x, std::vector<double>{0.8, 0.7}, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("body cdf variants") {
  CHECK(body_cdf_from_string(to_string(BodyCdf::Step)) == BodyCdf::Step);
  CHECK(body_cdf_from_string(to_string(BodyCdf::Interpolated)) == BodyCdf::Interpolated);
  std::vector<double> x(100);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  GpdFit g;
  g.u = 90;
  g.p_u = 0.905;
  const MarginalModel step(x, g, BodyCdf::Step);
  CHECK(step.cdf(10.0) == doctest::Approx(0.105));
  CHECK(step.cdf(10.5) == doctest::Approx(0.105));
  const MarginalModel lin(x, g, BodyCdf::Interpolated);
  CHECK(lin.cdf(10.5) == doctest::Approx(0.11));
}
