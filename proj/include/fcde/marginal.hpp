#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fcde::marginal {

struct GpdFit {
  double u = 0.0;
  double sigma = 1.0;
  double xi = 0.0;
  double p_u = 0.0;  // non-exceedance probability at u
  std::size_t n_exc = 0;
  double se_sigma = 0.0;
  double se_xi = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;

  /// Finite upper end point when xi < 0, +inf otherwise.
  double upper_endpoint() const;
};

/// Minimum number of exceedances accepted by the fitting routines.
inline constexpr std::size_t kMinExceedances = 30;

double gpd_cdf(double excess, double sigma, double xi);
double gpd_survival(double excess, double sigma, double xi);
double gpd_quantile(double p, double sigma, double xi);
/// Quantile from an upper-tail probability q = 1 - p (keeps precision for tiny q).
double gpd_quantile_upper(double q, double sigma, double xi);
double gpd_log_density(double excess, double sigma, double xi);
/// Returns -inf outside the parameter or data support.
double gpd_log_likelihood(std::span<const double> excesses, double sigma, double xi);

/// Maximum likelihood for exceedances of a known threshold. Only u, p_u and
/// n_exc of the result are left for the caller when used directly.
GpdFit fit_gpd_excesses(std::span<const double> excesses);

/// Threshold at the empirical quantile, then maximum likelihood on the
/// exceedances. Throws DataError with fewer than 30 exceedances and
/// NumericalError if no restart converges.
GpdFit fit_gpd(std::span<const double> sample, double threshold_quantile);

enum class BodyCdf { Step, Interpolated };

std::string to_string(BodyCdf b);
BodyCdf body_cdf_from_string(const std::string& s);

/// Empirical body below the threshold (Hazen plotting positions), GPD above.
class MarginalModel {
 public:
  MarginalModel() = default;
  MarginalModel(std::vector<double> sample, GpdFit gpd, BodyCdf body = BodyCdf::Interpolated);

  static MarginalModel fit(std::span<const double> sample, double threshold_quantile,
                           BodyCdf body = BodyCdf::Interpolated);

  double cdf(double x) const;
  double survival(double x) const;
  /// Generalized inverse; throws std::invalid_argument for p outside (0,1).
  double quantile(double p) const;
  double quantile_upper(double q) const;

  /// Standard Laplace margins; CDF values are clamped to [1e-12, 1 - 1e-12].
  double to_laplace(double x) const;
  double from_laplace(double y) const;

  const std::vector<double>& sorted_sample() const { return sorted_; }
  const GpdFit& gpd() const { return gpd_; }
  BodyCdf body() const { return body_; }

 private:
  double body_cdf(double x) const;
  double body_quantile(double p) const;

  std::vector<double> sorted_;
  GpdFit gpd_;
  BodyCdf body_ = BodyCdf::Interpolated;
};

struct ThresholdCandidate {
  double quantile = 0.0;
  double u = 0.0;
  std::size_t n_exc = 0;
  bool skipped = false;  // too few exceedances or fit failure
  double sigma_star = 0.0;
  double sigma_lo = 0.0, sigma_hi = 0.0;
  double xi = 0.0;
  double xi_lo = 0.0, xi_hi = 0.0;
  double mean_excess = 0.0;
};

struct ThresholdDiagnostics {
  std::vector<ThresholdCandidate> candidates;
  int n_boot = 0;
};

/// Refits the GPD at each candidate non-exceedance probability. Bootstrap
/// intervals are 2.5%/97.5% percentiles over n_boot resamples (NaN when
/// n_boot = 0).
ThresholdDiagnostics threshold_diagnostics(std::span<const double> sample,
                                           std::span<const double> grid, int n_boot,
                                           std::uint64_t seed);

std::string format_diagnostics(const ThresholdDiagnostics& diag);

}  // namespace fcde::marginal
