#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "fcde/optim.hpp"

using namespace fcde;

TEST_CASE("nelder-mead minimizes rosenbrock") {
  const auto f = [](std::span<const double> x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  };
  optim::NelderMeadOptions opt;
  opt.f_tolerance = 1e-14;
  opt.x_tolerance = 1e-10;
  const auto r = optim::nelder_mead(f, {-1.2, 1.0}, opt);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("non-finite values act as a barrier") {
  // Minimum of (x - 2)^2 restricted to x < 1 sits on the boundary.
  const auto f = [](std::span<const double> x) {
    return x[0] >= 1.0 ? std::numeric_limits<double>::quiet_NaN() : (x[0] - 2) * (x[0] - 2);
  };
  const auto r = optim::nelder_mead(f, {0.0});
  CHECK(r.x[0] < 1.0);
  CHECK(r.x[0] > 0.999);
}

TEST_CASE("evaluation cap is honoured") {
  const auto f = [](std::span<const double> x) { return std::cos(x[0]) + x[1] * x[1]; };
  optim::NelderMeadOptions opt;
  opt.max_evaluations = 25;
  const auto r = optim::nelder_mead(f, {0.0, 1.0}, opt);
  CHECK(r.evaluations <= 25 + 3);
  CHECK_FALSE(r.converged);
}

TEST_CASE("hessian and standard errors of a quadratic") {
  // f = x^2 / (2 * 4) + y^2 / (2 * 0.25) + 0.1 x y
  const auto f = [](std::span<const double> x) {
    return x[0] * x[0] / 8 + x[1] * x[1] / 0.5 + 0.1 * x[0] * x[1];
  };
  const std::vector<double> x{0.3, -0.2}, h{1e-3, 1e-3};
  const auto H = optim::hessian(f, x, h);
  CHECK(H(0, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(H(1, 1) == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(H(0, 1) == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(H(1, 0) == doctest::Approx(0.1).epsilon(1e-5));

  const double det = 0.25 * 4.0 - 0.01;
  const auto se = optim::standard_errors(H);
  CHECK(se[0] == doctest::Approx(std::sqrt(4.0 / det)).epsilon(1e-5));
  CHECK(se[1] == doctest::Approx(std::sqrt(0.25 / det)).epsilon(1e-5));

  Eigen::MatrixXd bad(2, 2);
  bad << 1, 0, 0, -1;
  const auto nan_se = optim::standard_errors(bad);
  CHECK(std::isnan(nan_se[0]));
  CHECK(std::isnan(nan_se[1]));
}

TEST_CASE("newton refinement finishes a curved valley") {
  auto rosen = [](std::span<const double> x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  };
  const std::vector<double> h{1e-5, 1e-5};
  const auto r = optim::newton_refine(rosen, {0.8, 0.6}, h);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-5));

  auto quad = [](std::span<const double> x) { return 3 * x[0] * x[0] + x[0] * x[1] + x[1] * x[1]; };
  const auto g = optim::gradient(quad, std::vector<double>{1.0, 2.0}, h);
  CHECK(g[0] == doctest::Approx(8.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(5.0).epsilon(1e-8));

  // A start outside the domain is returned unchanged.
  auto walled = [](std::span<const double> x) { return x[0] > 0 ? x[0] * x[0] : NAN; };
  const auto w = optim::newton_refine(walled, {-1.0}, std::vector<double>{1e-5});
  CHECK_FALSE(w.converged);
  CHECK(w.x[0] == -1.0);
}

TEST_CASE("bfgs on badly scaled and curved objectives") {
  auto rosen = [](std::span<const double> x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  };
  const auto r = optim::bfgs(rosen, {-1.2, 1.0}, std::vector<double>{1e-6, 1e-6}, 1e-3, 500, 1e-9);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));

  // Curvatures 1 and 1e6: the update learns the scales from an identity start.
  auto stretched = [](std::span<const double> x) {
    return 0.5 * std::pow(x[0] - 2, 2) + 0.5e6 * std::pow(x[1] + 1, 2);
  };
  const auto s = optim::bfgs(stretched, {0.0, 0.0}, std::vector<double>{1e-4, 1e-4}, 1e-6, 200, 1e-8);
  CHECK(s.converged);
  CHECK(s.x[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(s.x[1] == doctest::Approx(-1.0).epsilon(1e-6));

  // Exactly scaled start on a quadratic: one step.
  auto quad = [](std::span<const double> x) { return 2 * std::pow(x[0] - 1, 2) + 2 * x[1] * x[1]; };
  const auto q = optim::bfgs(quad, {3.0, -2.0}, std::vector<double>{1e-3, 1e-3}, 0.25, 50, 1e-8);
  CHECK(q.converged);
  CHECK(q.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(q.evaluations < 20);

  auto walled = [](std::span<const double> x) { return x[0] > 0 ? x[0] * x[0] : NAN; };
  CHECK_FALSE(optim::bfgs(walled, {-1.0}, std::vector<double>{1e-5}).converged);
}

TEST_CASE("curvature-adapted steps") {
  // Curvatures 1 and 1e-8 both land in the target band.
  auto f = [](std::span<const double> x) { return 0.5 * x[0] * x[0] + 0.5e-8 * x[1] * x[1]; };
  const std::vector<double> x{0.0, 0.0};
  const auto h = optim::curvature_steps(f, x, std::vector<double>{1e-4, 1e-4});
  for (int i = 0; i < 2; ++i) {
    std::vector<double> up(x), down(x);
    up[i] += h[i];
    down[i] -= h[i];
    const double d2 = f(up) + f(down) - 2 * f(x);
    CHECK(d2 >= 1e-5);
    CHECK(d2 <= 1e-2);
  }
  auto flat = [](std::span<const double>) { return 1.0; };
  const auto hf = optim::curvature_steps(flat, std::vector<double>{1.0}, std::vector<double>{1e-3});
  CHECK(std::isfinite(hf[0]));
  CHECK(hf[0] > 0.0);
}
