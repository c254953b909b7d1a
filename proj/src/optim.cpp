#include "fcde/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fcde::optim {
namespace {

double evaluate(const Objective& f, const std::vector<double>& x, int& count) {
  ++count;
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace

Result nelder_mead(const Objective& f, std::vector<double> x0, const NelderMeadOptions& options) {
  const std::size_t n = x0.size();
  Result result;
  if (n == 0) {
    result.x = x0;
    result.value = evaluate(f, x0, result.evaluations);
    result.converged = true;
    return result;
  }
  // Dimension-adaptive coefficients (Gao and Han).
  const double dn = static_cast<double>(n);
  const double alpha = 1.0;
  const double gamma = 1.0 + 2.0 / dn;
  const double rho = 0.75 - 1.0 / (2.0 * dn);
  const double sigma = 1.0 - 1.0 / dn;

  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double h = options.step.size() == n ? options.step[i]
                                        : (x0[i] != 0.0 ? 0.1 * std::abs(x0[i]) : 0.05);
    simplex[i + 1][i] += h;
  }
  int& evals = result.evaluations;
  for (std::size_t i = 0; i <= n; ++i) values[i] = evaluate(f, simplex[i], evals);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  while (evals < options.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    {
      std::vector<std::vector<double>> s2(n + 1);
      std::vector<double> v2(n + 1);
      for (std::size_t i = 0; i <= n; ++i) {
        s2[i] = std::move(simplex[order[i]]);
        v2[i] = values[order[i]];
      }
      simplex = std::move(s2);
      values = std::move(v2);
    }

    const double fbest = values.front();
    const double fworst = values.back();
    double diameter = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        diameter = std::max(diameter, std::abs(simplex[i][j] - simplex[0][j]) /
                                          (1.0 + std::abs(simplex[0][j])));
    if (std::isfinite(fworst) &&
        std::abs(fworst - fbest) <= options.f_tolerance * (1.0 + std::abs(fbest)) &&
        diameter <= options.x_tolerance) {
      result.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / dn;

    auto along = [&](double t, std::vector<double>& out) {
      for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + t * (simplex[n][j] - centroid[j]);
    };

    along(-alpha, trial);
    const double fr = evaluate(f, trial, evals);
    if (fr < values[0]) {
      along(-alpha * gamma, trial2);
      const double fe = evaluate(f, trial2, evals);
      if (fe < fr) {
        simplex[n] = trial2;
        values[n] = fe;
      } else {
        simplex[n] = trial;
        values[n] = fr;
      }
      continue;
    }
    if (fr < values[n - 1]) {
      simplex[n] = trial;
      values[n] = fr;
      continue;
    }
    const bool outside = fr < values[n];
    along(outside ? -alpha * rho : rho, trial2);
    const double fc = evaluate(f, trial2, evals);
    if (fc < (outside ? fr : values[n])) {
      simplex[n] = trial2;
      values[n] = fc;
      continue;
    }
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
      values[i] = evaluate(f, simplex[i], evals);
    }
  }
  const auto best = std::min_element(values.begin(), values.end()) - values.begin();
  result.x = simplex[best];
  result.value = values[best];
  return result;
}

Eigen::MatrixXd hessian(const Objective& f, std::span<const double> x,
                        std::span<const double> h) {
  const std::size_t n = x.size();
  Eigen::MatrixXd H(n, n);
  std::vector<double> p(x.begin(), x.end());
  const double f0 = f(p);
  auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
    std::vector<double> q(x.begin(), x.end());
    q[i] += di;
    q[j] += dj;
    return f(q);
  };
  for (std::size_t i = 0; i < n; ++i) {
    H(i, i) = (at(i, h[i], i, 0.0) - 2.0 * f0 + at(i, -h[i], i, 0.0)) / (h[i] * h[i]);
    for (std::size_t j = 0; j < i; ++j) {
      const double v = (at(i, h[i], j, h[j]) - at(i, h[i], j, -h[j]) - at(i, -h[i], j, h[j]) +
                        at(i, -h[i], j, -h[j])) /
                       (4.0 * h[i] * h[j]);
      H(i, j) = v;
      H(j, i) = v;
    }
  }
  return H;
}

std::vector<double> curvature_steps(const Objective& f, std::span<const double> x,
                                    std::span<const double> h0, double lo, double hi) {
  std::vector<double> h(h0.begin(), h0.end());
  std::vector<double> q(x.begin(), x.end());
  const double f0 = f(q);
  for (std::size_t i = 0; i < x.size(); ++i) {
    bool grew = false, shrank = false;
    for (int it = 0; it < 80; ++it) {
      q[i] = x[i] + h[i];
      const double up = f(q);
      q[i] = x[i] - h[i];
      const double down = f(q);
      q[i] = x[i];
      const double d2 = up + down - 2.0 * f0;
      if (!std::isfinite(d2) || d2 > hi) {
        h[i] *= 0.25;
        shrank = true;
      } else if (d2 < lo && !shrank && h[i] < 1e8 * (1.0 + std::abs(x[i]))) {
        h[i] *= 2.0;
        grew = true;
      } else {
        break;
      }
      if (grew && shrank) break;  // bracketed a jump in curvature; keep the smaller step
    }
  }
  return h;
}

std::vector<double> gradient(const Objective& f, std::span<const double> x,
                             std::span<const double> h) {
  std::vector<double> g(x.size());
  std::vector<double> q(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    q[i] = x[i] + h[i];
    const double up = f(q);
    q[i] = x[i] - h[i];
    const double down = f(q);
    q[i] = x[i];
    g[i] = (up - down) / (2.0 * h[i]);
  }
  return g;
}

Result bfgs(const Objective& f, std::vector<double> x0, std::span<const double> h,
            double initial_inverse, int max_iterations, double step_tolerance) {
  const auto n = static_cast<Eigen::Index>(x0.size());
  Result r;
  r.x = std::move(x0);
  r.value = evaluate(f, r.x, r.evaluations);
  if (!std::isfinite(r.value)) return r;
  auto grad = [&](const std::vector<double>& x) {
    const auto g = gradient(f, x, h);
    r.evaluations += static_cast<int>(2 * n);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(g.data(), n));
  };
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(n, n) * initial_inverse;
  Eigen::VectorXd g = grad(r.x);
  for (int it = 0; it < max_iterations; ++it) {
    if (!g.allFinite()) return r;
    Eigen::VectorXd d = -inv * g;
    if (d.norm() < step_tolerance) {
      r.converged = true;
      return r;
    }
    if (g.dot(d) >= 0.0) {
      // Lost descent: restart from the scaled identity.
      inv = Eigen::MatrixXd::Identity(n, n) * initial_inverse;
      d = -inv * g;
    }
    double t = 1.0, v = std::numeric_limits<double>::infinity();
    std::vector<double> trial(r.x);
    for (int tries = 0; tries < 30; ++tries, t *= 0.5) {
      for (Eigen::Index i = 0; i < n; ++i)
        trial[static_cast<std::size_t>(i)] = r.x[static_cast<std::size_t>(i)] + t * d(i);
      v = evaluate(f, trial, r.evaluations);
      if (v <= r.value + 1e-4 * t * g.dot(d)) break;
    }
    if (!(v < r.value)) {
      // No decrease along a descent direction: x is a minimum to working precision.
      r.converged = t * d.norm() < std::sqrt(step_tolerance);
      return r;
    }
    const Eigen::VectorXd g_new = grad(trial);
    const Eigen::VectorXd s = t * d, y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      inv = e * inv * e.transpose() + rho * s * s.transpose();
    }
    r.x = trial;
    r.value = v;
    g = g_new;
  }
  return r;
}

Result newton_refine(const Objective& f, std::vector<double> x0, std::span<const double> h,
                     int max_iterations, double f_tolerance) {
  const auto n = static_cast<Eigen::Index>(x0.size());
  Result r;
  r.x = std::move(x0);
  r.value = evaluate(f, r.x, r.evaluations);
  if (!std::isfinite(r.value)) return r;
  double lambda = 1e-3;
  for (int it = 0; it < max_iterations; ++it) {
    const auto g = gradient(f, r.x, h);
    const Eigen::MatrixXd H = hessian(f, r.x, h);
    r.evaluations += static_cast<int>(2 * n + 2 * n * n);
    if (!H.allFinite() || std::any_of(g.begin(), g.end(), [](double v) { return !std::isfinite(v); }))
      return r;
    const Eigen::VectorXd gv = Eigen::Map<const Eigen::VectorXd>(g.data(), n);
    bool moved = false;
    for (int tries = 0; tries < 30 && !moved; ++tries) {
      Eigen::MatrixXd A = H;
      for (Eigen::Index i = 0; i < n; ++i) A(i, i) += lambda * (std::abs(H(i, i)) + 1e-12);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd d = ldlt.solve(-gv);
      std::vector<double> trial(r.x);
      for (Eigen::Index i = 0; i < n; ++i) trial[static_cast<std::size_t>(i)] += d(i);
      const double v = evaluate(f, trial, r.evaluations);
      if (v <= r.value) {
        const double change = r.value - v;
        r.x = std::move(trial);
        r.value = v;
        moved = true;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (change <= f_tolerance * (1.0 + std::abs(v)) && lambda <= 1e-6) {
          r.converged = true;
          return r;
        }
      } else {
        lambda *= 10.0;
      }
    }
    if (!moved) {
      // No damping lowers f: x is a minimum to working precision.
      r.converged = true;
      return r;
    }
  }
  return r;
}

std::vector<double> standard_errors(const Eigen::MatrixXd& hess) {
  const auto n = static_cast<std::size_t>(hess.rows());
  std::vector<double> se(n, std::numeric_limits<double>::quiet_NaN());
  if (!hess.allFinite()) return se;
  Eigen::LLT<Eigen::MatrixXd> llt(hess);
  if (llt.info() != Eigen::Success) return se;
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(hess.rows(), hess.cols()));
  for (std::size_t i = 0; i < n; ++i) {
    const double v = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    if (v > 0.0) se[i] = std::sqrt(v);
  }
  return se;
}

}  // namespace fcde::optim
