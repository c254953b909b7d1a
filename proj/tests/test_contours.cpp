#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "fcde/contours.hpp"
#include "fcde/errors.hpp"
#include "fcde/stats.hpp"

using namespace fcde;
using namespace fcde::contours;

namespace {

struct Sample {
  std::vector<double> hs, s2;
};

// Lognormal S2 given hs with mu_L = a + b h and constant sigma_L.
Sample lognormal_sample(std::size_t n, double a, double b, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uh(1.0, 10.0);
  std::normal_distribution<double> z;
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = uh(rng);
    s.hs.push_back(h);
    s.s2.push_back(std::exp(a + b * h + sigma * z(rng)));
  }
  return s;
}

class StandardNormal : public MarginalLaw {
 public:
  double cdf(double x) const override { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
  double quantile(double p) const override { return stats::normal_quantile(p); }
};

class IndependentNormal : public ConditionalLaw {
 public:
  double cdf(double x2, double) const override { return 0.5 * std::erfc(-x2 / std::sqrt(2.0)); }
  double quantile(double p, double) const override { return stats::normal_quantile(p); }
};

// Root of 0.5 erfc(b / sqrt 2) = q by bisection.
double beta_by_bisection(double q) {
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(mid / std::sqrt(2.0)) > q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Contour circle_contour(double hs0, double s20, double r_hs, double r_s2, std::size_t k) {
  Contour c;
  c.center = {hs0, s20};
  c.k = k;
  for (std::size_t i = 0; i < k; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    c.angle.push_back(t);
    c.u1.push_back(std::cos(t));
    c.u2.push_back(std::sin(t));
    c.hs.push_back(hs0 + r_hs * std::cos(t));
    c.s2.push_back(s20 + r_s2 * std::sin(t));
  }
  return c;
}

response::CdeGrid uniform_cde(std::size_t n) {
  response::CdeGrid g;
  g.edges = condext::uniform_edges(0.0, 1.0, n, 0.0, 1.0, n);
  g.value.assign(g.edges.cells(), 1.0);
  return g;
}

}  // namespace

TEST_CASE("parameter forms") {
  const double lin[] = {1.0, 2.0};
  const double qua[] = {0.5, -1.0, 3.0};
  const double ex[] = {1.0, 2.0, 0.1};
  CHECK(eval_form(Form::Linear, lin, 3.0) == doctest::Approx(7.0));
  CHECK(eval_form(Form::Quadratic, qua, 3.0) == doctest::Approx(5.0));
  CHECK(eval_form(Form::Exponential, ex, 3.0) == doctest::Approx(1.0 + 2.0 * std::exp(0.3)));
  CHECK(form_size(Form::Linear) == 2);
  CHECK(form_size(Form::Exponential) == 3);
}

TEST_CASE("the zoo has 72 distinct models with round-trip labels") {
  const auto specs = all_model_specs();
  REQUIRE(specs.size() == 72);
  std::set<std::string> labels;
  for (const auto& s : specs) {
    labels.insert(s.label());
    CHECK(ModelSpec::parse(s.label()) == s);
  }
  CHECK(labels.size() == 72);
  CHECK(ModelSpec{Family::Gev, false, Form::Quadratic, Form::Exponential}.n_params() == 7);
  CHECK_THROWS_AS(ModelSpec::parse("gev/none/lin"), ConfigError);
  CHECK_THROWS_AS(ModelSpec::parse("cauchy/none/lin/lin"), ConfigError);
}

TEST_CASE("family densities integrate to their CDFs") {
  struct Case {
    ModelSpec spec;
    std::vector<double> coef;
  };
  const std::vector<Case> cases = {
      {{Family::Gev, false, Form::Linear, Form::Linear}, {0.03, 0.001, 0.004, 0.0, -0.2}},
      {{Family::Gev, false, Form::Linear, Form::Linear}, {0.03, 0.0, 0.004, 0.0, 0.2}},
      {{Family::Weibull, false, Form::Linear, Form::Linear}, {4.0, 0.1, 0.03, 0.0}},
      {{Family::Lognormal, false, Form::Linear, Form::Linear}, {-3.5, 0.02, 0.2, 0.0}},
      {{Family::Gamma, false, Form::Linear, Form::Linear}, {20.0, 0.0, 600.0, 10.0}},
  };
  const double hs = 3.0;
  for (const auto& c : cases) {
    CAPTURE(c.spec.label());
    const ConditionalModel m(c.spec, c.coef, 0.0);
    // Trapezoid integration of the density from far below the support.
    const double lo = m.quantile(1e-9, hs), hi = m.quantile(0.999, hs);
    const int n = 200000;
    const double h = (hi - lo) / n;
    double acc = m.cdf(lo, hs);
    double prev = std::exp(m.log_density(lo, hs));
    for (int i = 1; i <= n; ++i) {
      const double x = lo + i * h;
      const double f = std::exp(m.log_density(x, hs));
      acc += 0.5 * h * (prev + f);
      prev = f;
      if (i % 40000 == 0) CHECK(acc == doctest::Approx(m.cdf(x, hs)).epsilon(1e-5));
    }
    for (double p : {0.01, 0.3, 0.5, 0.9, 0.999})
      CHECK(m.cdf(m.quantile(p, hs), hs) == doctest::Approx(p).epsilon(1e-9));
  }
}

TEST_CASE("reflected model quantiles mirror the unreflected law") {
  const ModelSpec plain{Family::Weibull, false, Form::Linear, Form::Exponential};
  ModelSpec refl = plain;
  refl.reflected = true;
  const std::vector<double> coef{3.0, 0.2, 0.02, 0.001, 0.2};
  const double anchor = 0.09;
  const ConditionalModel a(plain, coef, anchor), b(refl, coef, anchor);
  for (double h : {1.0, 4.0, 9.0})
    for (double p : {0.05, 0.5, 0.95}) {
      CHECK(b.quantile(p, h) == doctest::Approx(anchor - a.quantile(1.0 - p, h)).epsilon(1e-12));
      CHECK(b.cdf(b.quantile(p, h), h) == doctest::Approx(p).epsilon(1e-10));
    }
  CHECK(b.log_density(anchor - 0.01, 2.0) == doctest::Approx(a.log_density(0.01, 2.0)));
}

TEST_CASE("lognormal coefficients are recovered within 3 standard errors") {
  const auto s = lognormal_sample(5000, 0.1, 0.02, 0.3, 17);
  const ModelSpec spec{Family::Lognormal, false, Form::Linear, Form::Linear};
  const auto m = fit_conditional_model(s.hs, s.s2, spec, 0.0);
  REQUIRE(m.converged);
  REQUIRE(m.standard_errors.size() == 4);
  const std::vector<double> truth{0.1, 0.02, 0.3, 0.0};
  for (std::size_t i = 0; i < 4; ++i) {
    CAPTURE(i);
    CHECK(std::isfinite(m.standard_errors[i]));
    CHECK(std::abs(m.coefficients()[i] - truth[i]) < 3.0 * m.standard_errors[i]);
  }
}

TEST_CASE("fitted parameters stay in their domain beyond the data") {
  // Heteroscedastic data invite scale forms that cross zero outside [1, 10].
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> uh(1.0, 10.0);
  std::normal_distribution<double> z;
  Sample s;
  for (int i = 0; i < 600; ++i) {
    const double h = uh(rng);
    s.hs.push_back(h);
    s.s2.push_back(std::exp(-3.5 + 0.03 * h + (0.6 - 0.05 * h) * z(rng)));
  }
  FitOptions opts;
  opts.standard_errors = false;
  for (const auto& spec : all_model_specs()) {
    CAPTURE(spec.label());
    ConditionalModel m;
    try {
      m = fit_conditional_model(s.hs, s.s2, spec, default_reflect_anchor(s.s2), opts);
    } catch (const NumericalError&) {
      continue;  // supremum on the boundary
    }
    for (double h = 1.0; h <= 20.0; h += 0.05) CHECK(m.params(h).valid);
  }
}

TEST_CASE("incomplete contours have no overlap value") {
  auto c = circle_contour(0.5, 0.5, 2.0, 2.0, 36);
  CHECK(c.complete());
  c.hs[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(c.complete());
  CHECK(std::isnan(zeta_overlap(c, uniform_cde(10))));
}

TEST_CASE("fitting rejects small samples and anchors below the data") {
  const auto s = lognormal_sample(40, -3.5, 0.02, 0.2, 1);
  const ModelSpec spec{Family::Gamma, false, Form::Linear, Form::Linear};
  CHECK_THROWS_AS(fit_conditional_model(s.hs, s.s2, spec, 0.0), DataError);
  const auto big = lognormal_sample(200, -3.5, 0.02, 0.2, 1);
  ModelSpec refl = spec;
  refl.reflected = true;
  CHECK_THROWS_AS(fit_conditional_model(big.hs, big.s2, refl, 0.0), DataError);
}

TEST_CASE("aggregate is the mean of the sub-scores and shift invariant") {
  const std::vector<double> same(6, -1.25);
  CHECK(aggregate(-1.25, same) == doctest::Approx(-1.25));
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  CHECK(aggregate(0.0, a) == doctest::Approx(3.0));
  std::vector<double> b{0.5, 2.5, 3.5, 4.0, 4.0, 6.5};
  const bool before = aggregate(0.1, a) > aggregate(0.2, b);
  for (double shift : {-10.0, 0.3, 7.0}) {
    auto as = a, bs = b;
    for (auto& v : as) v += shift;
    for (auto& v : bs) v += shift;
    CHECK((aggregate(0.1 + shift, as) > aggregate(0.2 + shift, bs)) == before);
  }
}

TEST_CASE("cross-validation with v = 0 tracks the in-sample likelihood") {
  const auto s = lognormal_sample(800, -3.5, 0.03, 0.2, 5);
  const ModelSpec spec{Family::Lognormal, false, Form::Linear, Form::Linear};
  ScoreSettings st;
  st.folds = {5};
  st.tail_quantiles = {0.0};
  st.replicates = 3;
  const auto score = aggregate_score(s.hs, s.s2, spec, 0.0, st);
  REQUIRE(score.cv.size() == 1);
  const auto full = fit_conditional_model(s.hs, s.s2, spec, 0.0);
  const double in_sample = full.log_likelihood / 800.0;
  // Held-out scores are slightly worse than in-sample, by about p/n.
  CHECK(score.cv[0].mean < in_sample);
  CHECK(score.cv[0].mean > in_sample - 0.05);
  CHECK(score.as == doctest::Approx(0.5 * (score.aic + score.cv[0].mean)));
}

TEST_CASE("an empty tail is a data error") {
  auto s = lognormal_sample(200, -3.5, 0.03, 0.2, 5);
  ScoreSettings st;
  st.folds = {10};
  st.tail_quantiles = {0.99};
  st.replicates = 1;
  const ModelSpec spec{Family::Lognormal, false, Form::Linear, Form::Linear};
  CHECK_THROWS_AS(aggregate_score(s.hs, s.s2, spec, 0.0, st), DataError);
}

TEST_CASE("the generating family ranks first on lognormal data") {
  const auto s = lognormal_sample(1200, -3.6, 0.05, 0.15, 11);
  std::vector<ModelSpec> specs;
  for (auto f : {Family::Gev, Family::Weibull, Family::Lognormal, Family::Gamma})
    specs.push_back({f, false, Form::Linear, Form::Linear});
  ScoreSettings st;
  st.replicates = 4;
  const auto rows = run_model_zoo(s.hs, s.s2, specs, st, 4);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.score.ok());
  const auto best = rows.front();
  bool lognormal_top = best.spec.family == Family::Lognormal;
  if (!lognormal_top)
    for (const auto& r : rows)
      if (r.spec.family == Family::Lognormal)
        lognormal_top = best.score.as - r.score.as <= 2.0 * std::max(best.score.se, r.score.se);
  CHECK(lognormal_top);
  const auto csv = format_zoo(rows, st);
  CHECK(csv.rfind("family,transform,form_p1,form_p2,aic,cv_0.0_5,cv_0.0_10,cv_0.8_5,cv_0.8_10,"
                  "cv_0.9_5,cv_0.9_10,as,se,status\n",
                  0) == 0);
}

TEST_CASE("Rosenblatt transform") {
  const auto s = lognormal_sample(2000, -3.5, 0.03, 0.2, 3);
  const auto hs_model = marginal::MarginalModel::fit(s.hs, 0.7);
  const ModelSpec spec{Family::Lognormal, false, Form::Linear, Form::Linear};
  const auto cond = fit_conditional_model(s.hs, s.s2, spec, 0.0);
  const SemiparametricMarginal ml(hs_model);
  const FittedConditional cl(cond);

  SUBCASE("medians map to the origin") {
    const double h = hs_model.quantile(0.5);
    const auto u = rosenblatt({h, cond.quantile(0.5, h)}, ml, cl);
    CHECK(u.u1 == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(u.u2) < 1e-9);
  }
  SUBCASE("round trip") {
    for (std::size_t i = 0; i < 200; ++i) {
      const condext::EnvPoint x{s.hs[i], s.s2[i]};
      const auto back = inverse_rosenblatt(rosenblatt(x, ml, cl), ml, cl);
      CHECK(back.hs == doctest::Approx(x.hs).epsilon(1e-8));
      CHECK(back.s2 == doctest::Approx(x.s2).epsilon(1e-8));
    }
  }
  SUBCASE("independent factors") {
    const IndependentNormal ind;
    const auto a = rosenblatt({2.0, 0.5}, ml, ind);
    const auto b = rosenblatt({6.0, 0.5}, ml, ind);
    CHECK(a.u2 == doctest::Approx(b.u2));
  }
}

TEST_CASE("IFORM reliability index") {
  const double beta = iform_beta(1000.0, 73.0);
  CHECK(beta == doctest::Approx(beta_by_bisection(1.0 / 73000.0)).epsilon(1e-9));
  CHECK(std::abs(beta - 4.1941) < 0.001);
  CHECK_THROWS_AS(iform_beta(0.5, 73.0), std::invalid_argument);
  CHECK_THROWS_AS(iform_beta(1.0, 0.5), std::invalid_argument);
}

TEST_CASE("with identity transforms the contour is the circle") {
  const StandardNormal ml;
  const IndependentNormal cl;
  const auto c = iform_contour(ml, cl, 100.0, 10.0, 64);
  REQUIRE(c.hs.size() == 64);
  CHECK_FALSE(c.clamped);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(std::hypot(c.u1[i], c.u2[i]) == doctest::Approx(c.beta).epsilon(1e-12));
    CHECK(c.hs[i] == doctest::Approx(c.u1[i]).epsilon(1e-9));
    CHECK(c.s2[i] == doctest::Approx(c.u2[i]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(iform_contour(ml, cl, 100.0, 10.0, 4), std::invalid_argument);
}

TEST_CASE("contours move continuously with the return period") {
  const auto s = lognormal_sample(2000, -3.5, 0.03, 0.2, 9);
  const auto hs_model = marginal::MarginalModel::fit(s.hs, 0.7);
  const auto cond = fit_conditional_model(
      s.hs, s.s2, {Family::Lognormal, false, Form::Linear, Form::Linear}, 0.0);
  const SemiparametricMarginal ml(hs_model);
  const FittedConditional cl(cond);
  const auto a = iform_contour(ml, cl, 100.0, 50.0, 72);
  const auto b = iform_contour(ml, cl, 101.0, 50.0, 72);
  double hs_scale = 0.0, s2_scale = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < 72; ++i) {
    hs_scale = std::max(hs_scale, std::abs(a.hs[i] - a.center.hs));
    s2_scale = std::max(s2_scale, std::abs(a.s2[i] - a.center.s2));
  }
  for (std::size_t i = 0; i < 72; ++i)
    worst = std::max({worst, std::abs(a.hs[i] - b.hs[i]) / hs_scale,
                      std::abs(a.s2[i] - b.s2[i]) / s2_scale});
  CHECK(worst < 0.05);
}

TEST_CASE("winding test") {
  const auto c = circle_contour(0.5, 0.5, 0.2, 0.2, 90);
  CHECK(inside_contour(c, {0.5, 0.5}));
  CHECK_FALSE(inside_contour(c, {0.9, 0.5}));
  CHECK(beyond_contour(c, {0.9, 0.5}));
  CHECK_FALSE(beyond_contour(c, {0.1, 0.5}));
  CHECK_FALSE(beyond_contour(c, {0.55, 0.5}));
  Contour flat = c;
  for (auto& v : flat.s2) v = 0.5;
  CHECK_THROWS_AS(zeta_overlap(flat, uniform_cde(4)), std::invalid_argument);
}

TEST_CASE("zeta analytic cases") {
  SUBCASE("all mass inside the contour") {
    auto g = uniform_cde(20);
    CHECK(zeta_overlap(circle_contour(0.5, 0.5, 2.0, 2.0, 360), g) ==
          doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("all mass beyond the contour") {
    auto g = uniform_cde(20);
    CHECK(zeta_overlap(circle_contour(-5.0, 0.5, 0.5, 0.5, 360), g) ==
          doctest::Approx(-1.0).epsilon(0.02));
  }
  SUBCASE("half of the mass beyond") {
    // Polygon covers hs < 0.5 and reaches far in s2; upper half of the unit square is beyond.
    auto g = uniform_cde(20);
    Contour c;
    c.center = {0.0, 0.5};
    const std::vector<std::pair<double, double>> poly{
        {-1.0, -5.0}, {0.5, -5.0}, {0.5, 5.0}, {-1.0, 5.0}};
    for (auto [h, s] : poly) {
      c.hs.push_back(h);
      c.s2.push_back(s);
    }
    CHECK(std::abs(zeta_overlap(c, g)) < 0.02);
  }
  SUBCASE("bounded in [-1, 1] and monotone under translation") {
    response::CdeGrid g;
    g.edges = condext::uniform_edges(0.0, 10.0, 12, 0.0, 0.1, 12);
    g.value.resize(g.edges.cells());
    double total = 0.0;
    for (std::size_t c = 0; c < g.edges.cells(); ++c) {
      const auto m = g.edges.midpoint(c);
      g.value[c] = std::exp(-std::pow(m.hs - 6.0, 2) - std::pow((m.s2 - 0.05) / 0.02, 2));
      total += g.value[c] * g.edges.area(c);
    }
    for (auto& v : g.value) v /= total;
    double prev = -2.0;
    // Shifting the contour toward larger hs enlarges the region that is not beyond it.
    for (double h0 = -2.0; h0 <= 12.0; h0 += 0.5) {
      const double z = zeta_overlap(circle_contour(h0, 0.05, 3.0, 0.03, 180), g);
      CHECK(z >= -1.0);
      CHECK(z <= 1.0);
      CHECK(z >= prev - 1e-12);
      prev = z;
    }
  }
}

TEST_CASE("contour CSV") {
  const auto c = circle_contour(1.0, 0.03, 0.5, 0.01, 8);
  const auto text = format_contour(c);
  CHECK(text.rfind("angle,u1,u2,hs,s2\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 9);
}
