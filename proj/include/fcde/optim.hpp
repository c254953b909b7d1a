#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fcde::optim {

using Objective = std::function<double(std::span<const double>)>;

struct NelderMeadOptions {
  int max_evaluations = 20000;
  double f_tolerance = 1e-10;
  double x_tolerance = 1e-9;
  /// Initial simplex edge per coordinate; empty means 10% of |x0| (or 0.05).
  std::vector<double> step;
};

struct Result {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Minimizes f. Non-finite objective values are treated as +infinity, so a
/// domain violation can be signalled by returning NaN or inf.
Result nelder_mead(const Objective& f, std::vector<double> x0,
                   const NelderMeadOptions& options = {});

/// Central-difference Hessian of f at x with per-coordinate steps h.
Eigen::MatrixXd hessian(const Objective& f, std::span<const double> x,
                        std::span<const double> h);

/// Per-coordinate finite-difference steps, grown or shrunk from h0 until the
/// second difference f(x+h) + f(x-h) - 2 f(x) lies in [lo, hi]. Relative steps
/// fail for parameters that nearly cancel each other; this adapts to the
/// curvature instead. Coordinates that never reach the band keep the last step.
std::vector<double> curvature_steps(const Objective& f, std::span<const double> x,
                                    std::span<const double> h0, double lo = 1e-5,
                                    double hi = 1e-2);

/// Central-difference gradient of f at x with per-coordinate steps h.
std::vector<double> gradient(const Objective& f, std::span<const double> x,
                             std::span<const double> h);

/// BFGS on central-difference gradients with a backtracking line search. The
/// inverse Hessian starts as initial_inverse times the identity. Converged when
/// the quasi-Newton step is shorter than step_tolerance.
Result bfgs(const Objective& f, std::vector<double> x0, std::span<const double> h,
            double initial_inverse = 1.0, int max_iterations = 100,
            double step_tolerance = 1e-6);

/// Levenberg-damped Newton iterations on finite-difference derivatives, for
/// polishing a minimum found by a derivative-free search. Steps that do not
/// lower f are rejected; converged when a full Newton step changes f by less
/// than f_tolerance (1 + |f|).
Result newton_refine(const Objective& f, std::vector<double> x0, std::span<const double> h,
                     int max_iterations = 50, double f_tolerance = 1e-12);

/// Standard errors from the inverse of a Hessian of a negative log-likelihood.
/// Returns NaN entries when the matrix is not positive definite.
std::vector<double> standard_errors(const Eigen::MatrixXd& hess);

}  // namespace fcde::optim
