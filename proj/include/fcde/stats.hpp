#pragma once

#include <functional>
#include <span>
#include <vector>

namespace fcde::stats {

double normal_cdf(double x);
double normal_quantile(double p);

double laplace_cdf(double y);
double laplace_quantile(double p);

double mean(std::span<const double> x);
/// Unbiased sample variance.
double variance(std::span<const double> x);
double stddev(std::span<const double> x);

/// Hazen-interpolated quantile of an ascending sample: the inverse of the
/// piecewise-linear curve through ((i - 0.5)/n, x_(i)), clamped at the ends.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> x, double p);

/// Interquartile range using quantile_sorted.
double iqr_sorted(std::span<const double> sorted);

/// 0.9 min(sd, IQR/1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> x);

/// sup |F_a - F_b| between two empirical CDFs.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

/// sup |F_n - F| for a sample against a continuous CDF.
double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf);

/// Weighted two-sample KS distance; weights need not be normalized.
double ks_weighted(std::span<const double> xa, std::span<const double> wa,
                   std::span<const double> xb, std::span<const double> wb);

}  // namespace fcde::stats
