#include "fcde/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace fcde::stats {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double laplace_cdf(double y) { return y < 0.0 ? 0.5 * std::exp(y) : 1.0 - 0.5 * std::exp(-y); }

double laplace_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("laplace_quantile: p outside (0,1)");
  return p < 0.5 ? std::log(2.0 * p) : -std::log(2.0 * (1.0 - p));
}

double mean(std::span<const double> x) {
  if (x.empty()) return std::nan("");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return std::nan("");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

double quantile_sorted(std::span<const double> sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 0) throw std::invalid_argument("quantile of empty sample");
  const double pos = p * static_cast<double>(n) + 0.5;  // 1-based fractional rank
  if (pos <= 1.0) return sorted.front();
  if (pos >= static_cast<double>(n)) return sorted.back();
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return sorted[i - 1] + frac * (sorted[i] - sorted[i - 1]);
}

double quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  return quantile_sorted(x, p);
}

double iqr_sorted(std::span<const double> sorted) {
  return quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
}

double silverman_bandwidth(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double sd = stddev(s);
  const double spread = std::min(sd, iqr_sorted(s) / 1.34);
  const double scale = spread > 0.0 ? spread : sd;
  return 0.9 * scale * std::pow(static_cast<double>(s.size()), -0.2);
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::vector<double> wa(a.size(), 1.0), wb(b.size(), 1.0);
  return ks_weighted(a, wa, b, wb);
}

double ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf) {
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = cdf(a[i]);
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f),
                  std::abs(f - static_cast<double>(i) / n)});
  }
  return d;
}

double ks_weighted(std::span<const double> xa, std::span<const double> wa,
                   std::span<const double> xb, std::span<const double> wb) {
  auto prepare = [](std::span<const double> x, std::span<const double> w) {
    std::vector<std::pair<double, double>> v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = {x[i], w[i]};
    std::sort(v.begin(), v.end());
    double total = 0.0;
    for (auto& [_, wi] : v) total += wi;
    if (!(total > 0.0)) throw std::invalid_argument("ks_weighted: zero total weight");
    for (auto& [_, wi] : v) wi /= total;
    return v;
  };
  const auto a = prepare(xa, wa);
  const auto b = prepare(xb, wb);
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, d = 0.0;
  while (i < a.size() || j < b.size()) {
    const double x = (j >= b.size() || (i < a.size() && a[i].first <= b[j].first)) ? a[i].first
                                                                                    : b[j].first;
    while (i < a.size() && a[i].first == x) fa += a[i++].second;
    while (j < b.size() && b[j].first == x) fb += b[j++].second;
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace fcde::stats
