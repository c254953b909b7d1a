#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fcde/marginal.hpp"

namespace fcde::condext {

/// Conditional extremes fit of Y2 | Y1 > v on standard Laplace margins:
/// Y2 = alpha Y1 + Y1^beta Z.
struct HtFit {
  double alpha = 0.0;
  double beta = 0.0;
  double v = 0.0;  // Laplace-scale conditioning threshold
  double threshold_quantile = 0.95;
  double mu_hat = 0.0;
  double s_hat = 1.0;
  double se_alpha = 0.0;
  double se_beta = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;
  std::size_t n_exc = 0;
  std::vector<double> residuals;
  double kde_bandwidth = 0.0;
  /// Observed (y1, y2) pairs with y1 <= v, resampled for the non-tail region.
  std::vector<std::pair<double, double>> body;

  /// P(Y1 > v) under Laplace margins.
  double exceedance_probability() const;
};

struct HtOptions {
  double threshold_quantile = 0.95;
  double bandwidth_multiplier = 1.0;
};

inline constexpr std::size_t kMinConditioningExceedances = 30;

/// Maximizes the Gaussian working likelihood
/// Y2 | Y1 = y ~ N(alpha y + mu y^beta, s^2 y^(2 beta)) over y > v, with
/// alpha in [-1, 1] and beta <= 1.
HtFit fit_ht(std::span<const double> y_cond, std::span<const double> y_other,
             const HtOptions& options = {});

/// Residuals (y2 - alpha y1) / y1^beta over pairs with y1 > v.
std::vector<double> ht_residuals(std::span<const double> y_cond, std::span<const double> y_other,
                                 double v, double alpha, double beta);

struct LaplacePair {
  double y1 = 0.0;
  double y2 = 0.0;
};

/// Joint draws on Laplace margins: tail draws with probability P(Y1 > v),
/// otherwise an observed body pair. Deterministic given seed and independent
/// of the worker count.
std::vector<LaplacePair> simulate_laplace(const HtFit& fit, std::size_t n_sim, std::uint64_t seed);

struct EnvPoint {
  double hs = 0.0;
  double s2 = 0.0;
};

std::vector<EnvPoint> simulate_joint(const HtFit& fit, const marginal::MarginalModel& hs_model,
                                     const marginal::MarginalModel& s2_model, std::size_t n_sim,
                                     std::uint64_t seed);

struct GridEdges {
  std::vector<double> hs;
  std::vector<double> s2;

  std::size_t n_hs() const { return hs.size() - 1; }
  std::size_t n_s2() const { return s2.size() - 1; }
  std::size_t cells() const { return n_hs() * n_s2(); }
  std::size_t index(std::size_t i_hs, std::size_t j_s2) const { return i_hs * n_s2() + j_s2; }
  double area(std::size_t cell) const;
  EnvPoint midpoint(std::size_t cell) const;
  EnvPoint lower(std::size_t cell) const;
  EnvPoint upper(std::size_t cell) const;
  /// Cell containing p (half-open cells, last row/column closed); -1 outside.
  long locate(EnvPoint p) const;

  void validate() const;
};

/// Evenly spaced edges over the bounding box of the sample.
GridEdges hull_edges(std::span<const EnvPoint> sample, std::size_t n_hs, std::size_t n_s2);
GridEdges uniform_edges(double hs_lo, double hs_hi, std::size_t n_hs, double s2_lo, double s2_hi,
                        std::size_t n_s2);

struct JointDensityGrid {
  GridEdges edges;
  std::vector<double> mass;
  std::vector<double> density;
  std::size_t n_sim = 0;

  double total_mass() const;
};

JointDensityGrid estimate_density_grid(std::span<const EnvPoint> sample, GridEdges edges);

std::string format_density_grid(const JointDensityGrid& grid);
JointDensityGrid parse_density_grid(const std::string& text, std::size_t n_sim);
std::string format_env_sample(std::span<const EnvPoint> sample);

}  // namespace fcde::condext
