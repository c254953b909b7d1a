#include "fcde/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "fcde/errors.hpp"
#include "fcde/log.hpp"
#include "fcde/optim.hpp"
#include "fcde/parallel.hpp"
#include "fcde/rng.hpp"
#include "fcde/stats.hpp"

namespace fcde::marginal {
namespace {

constexpr double kXiZero = 1e-9;
constexpr double kXiLower = -0.9;
constexpr double kXiUpper = 1.0;
constexpr double kClamp = 1e-12;

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

double clamp_probability(double F) {
  if (F < kClamp || F > 1.0 - kClamp || std::isnan(F)) {
    log::warn_once("laplace-clamp", "CDF value clamped to [1e-12, 1-1e-12] in Laplace transform");
    if (std::isnan(F)) return 0.5;
    return std::clamp(F, kClamp, 1.0 - kClamp);
  }
  return F;
}

double percentile(std::vector<double> v, double p) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }),
          v.end());
  if (v.empty()) return nan();
  std::sort(v.begin(), v.end());
  return stats::quantile_sorted(v, p);
}

}  // namespace

double GpdFit::upper_endpoint() const {
  return xi < 0.0 ? u - sigma / xi : std::numeric_limits<double>::infinity();
}

double gpd_survival(double excess, double sigma, double xi) {
  if (excess <= 0.0) return 1.0;
  if (std::abs(xi) < kXiZero) return std::exp(-excess / sigma);
  const double a = xi * excess / sigma;
  if (a <= -1.0) return 0.0;
  return std::exp(-std::log1p(a) / xi);
}

double gpd_cdf(double excess, double sigma, double xi) {
  if (excess <= 0.0) return 0.0;
  if (std::abs(xi) < kXiZero) return -std::expm1(-excess / sigma);
  const double a = xi * excess / sigma;
  if (a <= -1.0) return 1.0;
  return -std::expm1(-std::log1p(a) / xi);
}

double gpd_quantile_upper(double q, double sigma, double xi) {
  if (std::abs(xi) < kXiZero) return -sigma * std::log(q);
  return sigma / xi * std::expm1(-xi * std::log(q));
}

double gpd_quantile(double p, double sigma, double xi) {
  if (std::abs(xi) < kXiZero) return -sigma * std::log1p(-p);
  return sigma / xi * std::expm1(-xi * std::log1p(-p));
}

double gpd_log_density(double excess, double sigma, double xi) {
  if (!(sigma > 0.0) || excess < 0.0) return -std::numeric_limits<double>::infinity();
  if (std::abs(xi) < kXiZero) return -std::log(sigma) - excess / sigma;
  const double a = xi * excess / sigma;
  if (a <= -1.0) return -std::numeric_limits<double>::infinity();
  return -std::log(sigma) - (1.0 + 1.0 / xi) * std::log1p(a);
}

double gpd_log_likelihood(std::span<const double> excesses, double sigma, double xi) {
  double ll = 0.0;
  for (double y : excesses) {
    ll += gpd_log_density(y, sigma, xi);
    if (!std::isfinite(ll)) return -std::numeric_limits<double>::infinity();
  }
  return ll;
}

GpdFit fit_gpd_excesses(std::span<const double> excesses) {
  if (excesses.size() < kMinExceedances)
    throw DataError(fmt::format("too few exceedances ({} < {})", excesses.size(),
                                kMinExceedances));
  const double m = stats::mean(excesses);
  if (!(m > 0.0)) throw DataError("exceedances have zero mean excess");

  auto objective = [&](std::span<const double> p) {
    const double xi = p[1];
    if (!(xi > kXiLower && xi < kXiUpper)) return std::numeric_limits<double>::infinity();
    return -gpd_log_likelihood(excesses, std::exp(p[0]), xi);
  };

  // Start at the exponential moment fit; restarts jitter around it.
  const std::vector<double> start{std::log(m), 0.0};
  optim::NelderMeadOptions opts;
  opts.step = {0.2, 0.1};
  opts.f_tolerance = 1e-12;
  opts.x_tolerance = 1e-9;
  optim::Result best;
  best.x = start;
  best.value = objective(start);
  bool any_converged = false;
  Rng rng(0x5eed6bdULL);
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (int attempt = 0; attempt < 3; ++attempt) {
    auto x0 = start;
    if (attempt > 0) {
      x0[0] += 0.3 * jitter(rng);
      x0[1] = std::clamp(x0[1] + 0.2 * jitter(rng), kXiLower + 0.05, kXiUpper - 0.05);
    }
    const auto r = optim::nelder_mead(objective, x0, opts);
    any_converged = any_converged || r.converged;
    if (r.value <= best.value) best = r;
  }
  if (!any_converged || !std::isfinite(best.value))
    throw NumericalError("GPD likelihood maximization did not converge after restarts");

  GpdFit fit;
  fit.sigma = std::exp(best.x[0]);
  fit.xi = best.x[1];
  fit.log_likelihood = -best.value;
  fit.n_exc = excesses.size();
  fit.converged = true;

  auto natural = [&](std::span<const double> p) {
    if (!(p[0] > 0.0)) return std::numeric_limits<double>::infinity();
    return -gpd_log_likelihood(excesses, p[0], p[1]);
  };
  const std::vector<double> at{fit.sigma, fit.xi};
  const std::vector<double> h{1e-4 * fit.sigma, 1e-4};
  const auto se = optim::standard_errors(optim::hessian(natural, at, h));
  fit.se_sigma = se[0];
  fit.se_xi = se[1];
  return fit;
}

GpdFit fit_gpd(std::span<const double> sample, double threshold_quantile) {
  if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0))
    throw std::invalid_argument("threshold quantile must lie in (0,1)");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.empty()) throw DataError("empty sample");
  const double q = stats::quantile_sorted(sorted, threshold_quantile);
  // Snap the threshold to the largest observation not above the quantile so the
  // splice matches the empirical CDF exactly.
  const auto m = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), q) -
                                          sorted.begin());
  if (m == 0) throw DataError("threshold below the sample minimum");
  const double u = sorted[m - 1];
  std::vector<double> excesses;
  excesses.reserve(sorted.size() - m);
  for (std::size_t i = m; i < sorted.size(); ++i) excesses.push_back(sorted[i] - u);
  GpdFit fit = fit_gpd_excesses(excesses);
  fit.u = u;
  fit.p_u = (static_cast<double>(m) - 0.5) / static_cast<double>(sorted.size());
  return fit;
}

std::string to_string(BodyCdf b) { return b == BodyCdf::Step ? "step" : "interpolated"; }

BodyCdf body_cdf_from_string(const std::string& s) {
  if (s == "step") return BodyCdf::Step;
  if (s == "interpolated" || s == "linear") return BodyCdf::Interpolated;
  throw ConfigError(fmt::format("unknown empirical CDF variant '{}'", s));
}

MarginalModel::MarginalModel(std::vector<double> sample, GpdFit gpd, BodyCdf body)
    : sorted_(std::move(sample)), gpd_(gpd), body_(body) {
  std::sort(sorted_.begin(), sorted_.end());
  if (sorted_.empty()) throw DataError("empty sample");
  if (!(gpd_.sigma > 0.0) || !(gpd_.p_u > 0.0 && gpd_.p_u < 1.0))
    throw std::invalid_argument("invalid GPD parameters for marginal model");
}

MarginalModel MarginalModel::fit(std::span<const double> sample, double threshold_quantile,
                                 BodyCdf body) {
  return MarginalModel(std::vector<double>(sample.begin(), sample.end()),
                       fit_gpd(sample, threshold_quantile), body);
}

double MarginalModel::body_cdf(double x) const {
  const double n = static_cast<double>(sorted_.size());
  const auto i = static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), x) -
                                          sorted_.begin());
  if (i == 0) return 0.0;
  const double base = (static_cast<double>(i) - 0.5) / n;
  if (body_ == BodyCdf::Step || i >= sorted_.size()) return base;
  const double lo = sorted_[i - 1];
  const double hi = sorted_[i];
  return base + (x - lo) / (hi - lo) / n;
}

double MarginalModel::cdf(double x) const {
  if (x <= gpd_.u) return body_cdf(x);
  return gpd_.p_u + (1.0 - gpd_.p_u) * gpd_cdf(x - gpd_.u, gpd_.sigma, gpd_.xi);
}

double MarginalModel::survival(double x) const {
  if (x <= gpd_.u) return 1.0 - body_cdf(x);
  return (1.0 - gpd_.p_u) * gpd_survival(x - gpd_.u, gpd_.sigma, gpd_.xi);
}

double MarginalModel::body_quantile(double p) const {
  const std::size_t n = sorted_.size();
  const double pos = p * static_cast<double>(n) + 0.5;
  if (body_ == BodyCdf::Step) {
    auto i = static_cast<std::size_t>(std::ceil(pos - 1e-12));
    i = std::clamp<std::size_t>(i, 1, n);
    return sorted_[i - 1];
  }
  if (pos <= 1.0) return sorted_.front();
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i >= n) return sorted_.back();
  return sorted_[i - 1] + (pos - static_cast<double>(i)) * (sorted_[i] - sorted_[i - 1]);
}

double MarginalModel::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile: p outside (0,1)");
  if (p <= gpd_.p_u) return body_quantile(p);
  return gpd_.u + gpd_quantile((p - gpd_.p_u) / (1.0 - gpd_.p_u), gpd_.sigma, gpd_.xi);
}

double MarginalModel::quantile_upper(double q) const {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile: p outside (0,1)");
  if (q >= 1.0 - gpd_.p_u) return body_quantile(1.0 - q);
  return gpd_.u + gpd_quantile_upper(q / (1.0 - gpd_.p_u), gpd_.sigma, gpd_.xi);
}

double MarginalModel::to_laplace(double x) const {
  const double F = cdf(x);
  if (F < 0.5) return std::log(2.0 * clamp_probability(F));
  const double S = survival(x);
  return -std::log(2.0 * (1.0 - clamp_probability(1.0 - S)));
}

double MarginalModel::from_laplace(double y) const {
  if (y < 0.0) return quantile(std::max(0.5 * std::exp(y), kClamp));
  return quantile_upper(std::max(0.5 * std::exp(-y), kClamp));
}

ThresholdDiagnostics threshold_diagnostics(std::span<const double> sample,
                                           std::span<const double> grid, int n_boot,
                                           std::uint64_t seed) {
  if (grid.empty()) throw std::invalid_argument("empty threshold grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.5 && grid[i] < 0.99))
      throw std::invalid_argument("threshold grid must lie within (0.5, 0.99)");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw std::invalid_argument("threshold grid must be strictly increasing");
  }
  if (n_boot < 0) throw std::invalid_argument("n_boot must be >= 0");

  const std::vector<double> data(sample.begin(), sample.end());
  ThresholdDiagnostics diag;
  diag.n_boot = n_boot;

  // bootstrap[b][g] = (sigma_star, xi)
  std::vector<std::vector<std::pair<double, double>>> boot(
      static_cast<std::size_t>(n_boot),
      std::vector<std::pair<double, double>>(grid.size(), {nan(), nan()}));
  parallel_for(static_cast<std::size_t>(n_boot), [&](std::size_t b) {
    Rng rng = make_rng(seed, b);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    std::vector<double> resample(data.size());
    for (auto& v : resample) v = data[pick(rng)];
    for (std::size_t g = 0; g < grid.size(); ++g) {
      try {
        const auto f = fit_gpd(resample, grid[g]);
        boot[b][g] = {f.sigma - f.xi * f.u, f.xi};
      } catch (const std::exception&) {
      }
    }
  });

  for (std::size_t g = 0; g < grid.size(); ++g) {
    ThresholdCandidate c;
    c.quantile = grid[g];
    c.sigma_lo = c.sigma_hi = c.xi_lo = c.xi_hi = nan();
    try {
      const auto f = fit_gpd(data, grid[g]);
      c.u = f.u;
      c.n_exc = f.n_exc;
      c.sigma_star = f.sigma - f.xi * f.u;
      c.xi = f.xi;
      double sum = 0.0;
      for (double x : data)
        if (x > f.u) sum += x - f.u;
      c.mean_excess = sum / static_cast<double>(f.n_exc);
    } catch (const std::exception& e) {
      c.skipped = true;
      c.sigma_star = c.xi = c.mean_excess = nan();
      log::warn(fmt::format("threshold candidate {} skipped: {}", grid[g], e.what()));
    }
    if (!c.skipped && n_boot > 0) {
      std::vector<double> ss, xs;
      for (const auto& row : boot) {
        ss.push_back(row[g].first);
        xs.push_back(row[g].second);
      }
      c.sigma_lo = percentile(ss, 0.025);
      c.sigma_hi = percentile(ss, 0.975);
      c.xi_lo = percentile(xs, 0.025);
      c.xi_hi = percentile(xs, 0.975);
    }
    diag.candidates.push_back(c);
  }
  return diag;
}

std::string format_diagnostics(const ThresholdDiagnostics& diag) {
  std::string out = "quantile,sigma_star,sigma_lo,sigma_hi,xi,xi_lo,xi_hi,mean_excess\n";
  auto f = [](double v) { return std::isfinite(v) ? fmt::format("{}", v) : std::string(); };
  for (const auto& c : diag.candidates)
    out += fmt::format("{},{},{},{},{},{},{},{}\n", c.quantile, f(c.sigma_star), f(c.sigma_lo),
                       f(c.sigma_hi), f(c.xi), f(c.xi_lo), f(c.xi_hi), f(c.mean_excess));
  return out;
}

}  // namespace fcde::marginal
