#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fcde/condext.hpp"
#include "fcde/errors.hpp"
#include "fcde/marginal.hpp"
#include "fcde/stats.hpp"

using namespace fcde;
using namespace fcde::condext;

namespace {

double laplace_draw(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p = u(rng);
  return p < 0.5 ? std::log(2 * p) : -std::log(2 * (1 - p));
}

struct Pairs {
  std::vector<double> y1, y2;
};

// Y1 standard Laplace; above zero Y2 follows the conditional model with normal Z,
// below zero Y2 is an independent Laplace draw.
Pairs ht_pairs(std::size_t n, double alpha, double beta, double z_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, z_sd);
  Pairs p;
  for (std::size_t i = 0; i < n; ++i) {
    const double y1 = laplace_draw(rng);
    p.y1.push_back(y1);
    p.y2.push_back(y1 > 0 ? alpha * y1 + std::pow(y1, beta) * z(rng) : laplace_draw(rng));
  }
  return p;
}

marginal::MarginalModel exponential_model(double rate, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> e(rate);
  std::vector<double> x(n);
  for (auto& v : x) v = e(rng);
  return marginal::MarginalModel::fit(x, 0.8);
}

}  // namespace

TEST_CASE("dependence parameters are recovered") {
  const auto d = ht_pairs(60000, 0.378, 0.533, 0.5, 1);
  const auto f = fit_ht(d.y1, d.y2, {0.95, 1.0});
  CHECK(f.converged);
  CHECK(f.n_exc > 2500);
  CHECK(std::abs(f.alpha - 0.378) < 3 * f.se_alpha);
  CHECK(std::abs(f.beta - 0.533) < 3 * f.se_beta);
  CHECK(f.alpha >= -1.0);
  CHECK(f.alpha <= 1.0);
  CHECK(f.beta <= 1.0);
  CHECK(f.v == doctest::Approx(stats::quantile(d.y1, 0.95)));
  CHECK(f.exceedance_probability() == doctest::Approx(0.5 * std::exp(-f.v)));

  // The residuals are those of the fitted parameters and their mean is mu_hat.
  const auto z = ht_residuals(d.y1, d.y2, f.v, f.alpha, f.beta);
  REQUIRE(z.size() == f.residuals.size());
  CHECK(z == f.residuals);
  const double se_mean = stats::stddev(z) / std::sqrt(static_cast<double>(z.size()));
  CHECK(std::abs(stats::mean(z) - f.mu_hat) < 3 * se_mean);
  CHECK(f.s_hat == doctest::Approx(stats::stddev(z)).epsilon(1e-3));
  CHECK(f.kde_bandwidth == doctest::Approx(stats::silverman_bandwidth(z)));
  CHECK(f.body.size() + f.n_exc == d.y1.size());
}

TEST_CASE("perfect dependence gives alpha one and no spread") {
  std::mt19937_64 rng(2);
  std::vector<double> y(4000);
  for (auto& v : y) v = laplace_draw(rng);
  const auto f = fit_ht(y, y);
  CHECK(f.alpha == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(stats::stddev(f.residuals) < 1e-6);
}

TEST_CASE("independence gives alpha near zero") {
  std::mt19937_64 rng(3);
  std::vector<double> a(100000), b(100000);
  for (auto& v : a) v = laplace_draw(rng);
  for (auto& v : b) v = laplace_draw(rng);
  const auto f = fit_ht(a, b);
  CHECK(std::abs(f.alpha) < 3 * f.se_alpha);
}

TEST_CASE("fit errors") {
  std::vector<double> a(100, 1.0), b(99, 1.0);
  CHECK_THROWS_AS(fit_ht(a, b), std::invalid_argument);
  CHECK_THROWS_AS(fit_ht(std::vector<double>{}, std::vector<double>{}), DataError);
  const auto d = ht_pairs(400, 0.3, 0.3, 0.5, 4);
  CHECK_THROWS_AS(fit_ht(d.y1, d.y2), DataError);  // 20 exceedances
}

TEST_CASE("simulation is deterministic and respects the threshold") {
  const auto d = ht_pairs(20000, 0.378, 0.533, 0.5, 5);
  const auto f = fit_ht(d.y1, d.y2);
  const auto hs_model = exponential_model(1.0, 5000, 6);
  const auto s2_model = exponential_model(30.0, 5000, 7);

  const auto a = simulate_joint(f, hs_model, s2_model, 50000, 99);
  const auto b = simulate_joint(f, hs_model, s2_model, 50000, 99);
  const auto c = simulate_joint(f, hs_model, s2_model, 50000, 100);
  bool same = true, differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].hs == b[i].hs && a[i].s2 == b[i].s2;
    differ = differ || a[i].hs != c[i].hs;
  }
  CHECK(same);
  CHECK(differ);

  const auto lap = simulate_laplace(f, 50000, 99);
  const double u_v = hs_model.quantile(stats::laplace_cdf(f.v));
  std::size_t tail = 0;
  for (std::size_t i = 0; i < lap.size(); ++i) {
    if (lap[i].y1 > f.v) {
      ++tail;
      CHECK(a[i].hs > u_v);
    }
  }
  const double p = f.exceedance_probability();
  CHECK(std::abs(tail / 50000.0 - p) < 4 * std::sqrt(p * (1 - p) / 50000.0));
  CHECK_THROWS(simulate_joint(f, hs_model, s2_model, 0, 1));
}

TEST_CASE("degenerate model reproduces the conditioning variable") {
  HtFit f;
  f.alpha = 1.0;
  f.beta = 0.0;
  f.v = 1.0;
  f.residuals.assign(50, 0.0);
  f.kde_bandwidth = 0.0;
  for (const auto& p : simulate_laplace(f, 1000, 4)) CHECK(p.y2 == p.y1);
}

TEST_CASE("simulated hs reproduces the marginal above the conditioning threshold") {
  const auto d = ht_pairs(20000, 0.378, 0.533, 0.5, 8);
  const auto f = fit_ht(d.y1, d.y2);
  const auto hs_model = exponential_model(0.7, 8000, 9);
  const auto s2_model = exponential_model(30.0, 8000, 10);
  const auto sim = simulate_joint(f, hs_model, s2_model, 300000, 11);
  const double u_v = hs_model.quantile(stats::laplace_cdf(f.v));
  const double s_v = hs_model.survival(u_v);
  std::vector<double> above;
  for (const auto& p : sim)
    if (p.hs > u_v) above.push_back(p.hs);
  const double d_ks = stats::ks_one_sample(
      above, [&](double x) { return x <= u_v ? 0.0 : 1.0 - hs_model.survival(x) / s_v; });
  CHECK(d_ks < 0.02);
}

TEST_CASE("density grid: uniform oracle, empty cells, refinement") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> uh(1.0, 5.0), us(0.01, 0.05);
  const std::size_t n = 200000;
  std::vector<EnvPoint> sample(n);
  for (auto& p : sample) p = {uh(rng), us(rng)};

  const auto g = estimate_density_grid(sample, uniform_edges(1.0, 5.0, 8, 0.01, 0.05, 5));
  const double total_area = 4.0 * 0.04;
  for (std::size_t c = 0; c < g.edges.cells(); ++c) {
    const double p = g.edges.area(c) / total_area;
    const double band = 3 * std::sqrt(p * (1 - p) / n) / g.edges.area(c);
    CHECK(std::abs(g.density[c] - 1.0 / total_area) < band);
    CHECK(g.density[c] == doctest::Approx(g.mass[c] / g.edges.area(c)));
  }
  CHECK(g.total_mass() == doctest::Approx(1.0).epsilon(1e-12));

  // Larger box: cells outside the sample are empty and total mass is unchanged.
  const auto wide = estimate_density_grid(sample, uniform_edges(0.0, 6.0, 6, 0.0, 0.06, 6));
  CHECK(wide.density[0] == 0.0);
  CHECK(wide.total_mass() == doctest::Approx(1.0).epsilon(1e-12));

  const auto fine = estimate_density_grid(sample, uniform_edges(1.0, 5.0, 16, 0.01, 0.05, 10));
  CHECK(fine.edges.cells() == 4 * g.edges.cells());
  CHECK(std::abs(fine.total_mass() - g.total_mass()) < 1e-12);

  // A grid covering part of the sample holds exactly the fraction inside it.
  const auto part = estimate_density_grid(sample, uniform_edges(2.0, 4.0, 4, 0.02, 0.04, 4));
  const auto inside = std::count_if(sample.begin(), sample.end(), [](const EnvPoint& p) {
    return p.hs >= 2.0 && p.hs <= 4.0 && p.s2 >= 0.02 && p.s2 <= 0.04;
  });
  CHECK(part.total_mass() == static_cast<double>(inside) / n);

  GridEdges bad;
  bad.hs = {1.0, 1.0, 2.0};
  bad.s2 = {0.0, 1.0};
  CHECK_THROWS_AS(estimate_density_grid(sample, bad), std::invalid_argument);
}

TEST_CASE("grid cells, location and csv round trip") {
  const auto e = uniform_edges(0.0, 4.0, 4, 0.0, 0.3, 3);
  CHECK(e.cells() == 12);
  CHECK(e.locate({0.5, 0.05}) == 0);
  CHECK(e.locate({1.0, 0.0}) == static_cast<long>(e.index(1, 0)));
  CHECK(e.locate({4.0, 0.3}) == 11);
  CHECK(e.locate({4.01, 0.1}) == -1);
  CHECK(e.midpoint(e.index(2, 1)).hs == doctest::Approx(2.5));
  CHECK(e.midpoint(e.index(2, 1)).s2 == doctest::Approx(0.15));

  std::vector<EnvPoint> pts{{0.5, 0.05}, {3.5, 0.25}, {3.6, 0.25}, {1.2, 0.12}};
  const auto g = estimate_density_grid(pts, e);
  const auto back = parse_density_grid(format_density_grid(g), g.n_sim);
  CHECK(back.edges.hs == g.edges.hs);
  CHECK(back.mass == g.mass);
  CHECK(format_density_grid(g).rfind("hs_lo,hs_hi,s2_lo,s2_hi,mass,density\n", 0) == 0);
  CHECK(format_env_sample(pts).rfind("hs,s2\n0.5,0.05\n", 0) == 0);
}
