#include "fcde/condext.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "fcde/csv.hpp"
#include "fcde/errors.hpp"
#include "fcde/optim.hpp"
#include "fcde/parallel.hpp"
#include "fcde/rng.hpp"
#include "fcde/stats.hpp"

namespace fcde::condext {
namespace {

constexpr double kMinScale = 1e-12;
constexpr double kBetaLower = -5.0;
constexpr std::size_t kChunk = 16384;

struct Exceedances {
  std::vector<double> y1, y2, log_y1;
};

// Profile log-likelihood with mu and s at their closed-form maximizers.
double profile_loglik(const Exceedances& e, double alpha, double beta, double* mu_out = nullptr,
                      double* s_out = nullptr) {
  const std::size_t n = e.y1.size();
  double sum = 0.0, sumsq = 0.0, sum_log = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (e.y2[i] - alpha * e.y1[i]) * std::exp(-beta * e.log_y1[i]);
    sum += z;
    sumsq += z * z;
    sum_log += e.log_y1[i];
  }
  const double dn = static_cast<double>(n);
  const double mu = sum / dn;
  const double var = std::max(sumsq / dn - mu * mu, 0.0);
  const double s = std::max(std::sqrt(var), kMinScale);
  if (mu_out) *mu_out = mu;
  if (s_out) *s_out = s;
  return -dn * std::log(s) - beta * sum_log - 0.5 * dn * (var / (s * s)) -
         0.5 * dn * std::log(2.0 * std::numbers::pi);
}

double full_loglik(const Exceedances& e, double alpha, double beta, double mu, double s) {
  if (!(s > 0.0)) return -std::numeric_limits<double>::infinity();
  double ll = 0.0;
  for (std::size_t i = 0; i < e.y1.size(); ++i) {
    const double sd = s * std::exp(beta * e.log_y1[i]);
    const double m = alpha * e.y1[i] + mu * std::exp(beta * e.log_y1[i]);
    const double r = (e.y2[i] - m) / sd;
    ll += -std::log(sd) - 0.5 * r * r - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return ll;
}

std::pair<double, double> project(std::span<const double> p) {
  return {std::clamp(p[0], -1.0, 1.0), std::clamp(p[1], kBetaLower, 1.0)};
}

}  // namespace

double HtFit::exceedance_probability() const { return 1.0 - stats::laplace_cdf(v); }

std::vector<double> ht_residuals(std::span<const double> y_cond, std::span<const double> y_other,
                                 double v, double alpha, double beta) {
  std::vector<double> z;
  for (std::size_t i = 0; i < y_cond.size(); ++i)
    if (y_cond[i] > v) z.push_back((y_other[i] - alpha * y_cond[i]) / std::pow(y_cond[i], beta));
  return z;
}

HtFit fit_ht(std::span<const double> y_cond, std::span<const double> y_other,
             const HtOptions& options) {
  if (y_cond.size() != y_other.size())
    throw std::invalid_argument("fit_ht: vectors differ in length");
  if (!(options.threshold_quantile > 0.0 && options.threshold_quantile < 1.0))
    throw std::invalid_argument("fit_ht: threshold quantile outside (0,1)");
  if (y_cond.empty()) throw DataError("empty conditioning set");

  HtFit fit;
  fit.threshold_quantile = options.threshold_quantile;
  fit.v = stats::quantile(std::vector<double>(y_cond.begin(), y_cond.end()),
                          options.threshold_quantile);
  if (!(fit.v > 0.0))
    throw DataError("conditioning threshold must be positive on the Laplace scale");

  Exceedances e;
  for (std::size_t i = 0; i < y_cond.size(); ++i) {
    if (y_cond[i] > fit.v) {
      e.y1.push_back(y_cond[i]);
      e.y2.push_back(y_other[i]);
      e.log_y1.push_back(std::log(y_cond[i]));
    } else {
      fit.body.emplace_back(y_cond[i], y_other[i]);
    }
  }
  if (e.y1.empty()) throw DataError("empty conditioning set");
  if (e.y1.size() < kMinConditioningExceedances)
    throw DataError(fmt::format("too few conditioning exceedances ({} < {})", e.y1.size(),
                                kMinConditioningExceedances));
  fit.n_exc = e.y1.size();

  auto objective = [&](std::span<const double> p) {
    const auto [a, b] = project(p);
    return -profile_loglik(e, a, b);
  };

  std::vector<double> start{0.0, 0.0};
  double best_start = std::numeric_limits<double>::infinity();
  for (double a = -0.9; a <= 1.0 + 1e-9; a += 0.1)
    for (double b = -0.8; b <= 0.9 + 1e-9; b += 0.1) {
      const double f = -profile_loglik(e, a, b);
      if (f < best_start) {
        best_start = f;
        start = {a, b};
      }
    }

  optim::NelderMeadOptions opts;
  opts.step = {0.05, 0.05};
  opts.f_tolerance = 1e-13;
  opts.x_tolerance = 1e-10;
  auto result = optim::nelder_mead(objective, start, opts);
  if (!result.converged) {
    auto again = optim::nelder_mead(objective, result.x, opts);
    if (again.value <= result.value) result = again;
  }
  if (!result.converged || !std::isfinite(result.value))
    throw NumericalError("conditional extremes likelihood maximization did not converge");

  std::tie(fit.alpha, fit.beta) = project(result.x);
  profile_loglik(e, fit.alpha, fit.beta, &fit.mu_hat, &fit.s_hat);
  fit.log_likelihood = -result.value;
  fit.converged = true;

  const std::vector<double> at{fit.alpha, fit.beta, fit.mu_hat, fit.s_hat};
  const std::vector<double> h{1e-4, 1e-4, 1e-4 * std::max(1.0, std::abs(fit.mu_hat)),
                              1e-4 * fit.s_hat};
  auto negll = [&](std::span<const double> p) { return -full_loglik(e, p[0], p[1], p[2], p[3]); };
  if (fit.s_hat > 1e-8) {
    const auto se = optim::standard_errors(optim::hessian(negll, at, h));
    fit.se_alpha = se[0];
    fit.se_beta = se[1];
  } else {
    fit.se_alpha = fit.se_beta = 0.0;
  }

  fit.residuals = ht_residuals(y_cond, y_other, fit.v, fit.alpha, fit.beta);
  const double sd = stats::stddev(fit.residuals);
  fit.kde_bandwidth =
      sd > 0.0 ? options.bandwidth_multiplier * stats::silverman_bandwidth(fit.residuals) : 0.0;
  return fit;
}

std::vector<LaplacePair> simulate_laplace(const HtFit& fit, std::size_t n_sim,
                                          std::uint64_t seed) {
  if (n_sim == 0) throw std::invalid_argument("n_sim must be positive");
  if (fit.residuals.empty()) throw std::invalid_argument("fit has no residuals");
  const double p_exc = fit.exceedance_probability();
  const bool have_body = !fit.body.empty();
  std::vector<LaplacePair> out(n_sim);
  const std::size_t chunks = (n_sim + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    Rng rng = make_rng(seed, c);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    std::normal_distribution<double> norm(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_res(0, fit.residuals.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_body(0, have_body ? fit.body.size() - 1 : 0);
    const std::size_t end = std::min(n_sim, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      if (!have_body || unif(rng) < p_exc) {
        const double y1 = fit.v + expo(rng);
        const double z = fit.residuals[pick_res(rng)] + fit.kde_bandwidth * norm(rng);
        out[i] = {y1, fit.alpha * y1 + std::pow(y1, fit.beta) * z};
      } else {
        const auto& b = fit.body[pick_body(rng)];
        out[i] = {b.first, b.second};
      }
    }
  });
  return out;
}

std::vector<EnvPoint> simulate_joint(const HtFit& fit, const marginal::MarginalModel& hs_model,
                                     const marginal::MarginalModel& s2_model, std::size_t n_sim,
                                     std::uint64_t seed) {
  const auto lap = simulate_laplace(fit, n_sim, seed);
  std::vector<EnvPoint> out(n_sim);
  const std::size_t chunks = (n_sim + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(n_sim, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i)
      out[i] = {hs_model.from_laplace(lap[i].y1), s2_model.from_laplace(lap[i].y2)};
  });
  return out;
}

void GridEdges::validate() const {
  auto check = [](const std::vector<double>& e, const char* name) {
    if (e.size() < 2) throw std::invalid_argument(fmt::format("{} edges need >= 2 entries", name));
    for (std::size_t i = 1; i < e.size(); ++i)
      if (!(e[i] > e[i - 1]))
        throw std::invalid_argument(fmt::format("zero-area cell: {} edges not increasing", name));
  };
  check(hs, "hs");
  check(s2, "s2");
}

double GridEdges::area(std::size_t cell) const {
  const std::size_t i = cell / n_s2(), j = cell % n_s2();
  return (hs[i + 1] - hs[i]) * (s2[j + 1] - s2[j]);
}

EnvPoint GridEdges::midpoint(std::size_t cell) const {
  const std::size_t i = cell / n_s2(), j = cell % n_s2();
  return {0.5 * (hs[i] + hs[i + 1]), 0.5 * (s2[j] + s2[j + 1])};
}

EnvPoint GridEdges::lower(std::size_t cell) const {
  return {hs[cell / n_s2()], s2[cell % n_s2()]};
}

EnvPoint GridEdges::upper(std::size_t cell) const {
  return {hs[cell / n_s2() + 1], s2[cell % n_s2() + 1]};
}

long GridEdges::locate(EnvPoint p) const {
  auto find = [](const std::vector<double>& e, double x) -> long {
    if (!(x >= e.front() && x <= e.back())) return -1;
    if (x == e.back()) return static_cast<long>(e.size()) - 2;
    return static_cast<long>(std::upper_bound(e.begin(), e.end(), x) - e.begin()) - 1;
  };
  const long i = find(hs, p.hs);
  const long j = find(s2, p.s2);
  if (i < 0 || j < 0) return -1;
  return static_cast<long>(index(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
}

GridEdges uniform_edges(double hs_lo, double hs_hi, std::size_t n_hs, double s2_lo, double s2_hi,
                        std::size_t n_s2) {
  if (n_hs == 0 || n_s2 == 0) throw std::invalid_argument("grid needs at least one cell");
  GridEdges e;
  for (std::size_t i = 0; i <= n_hs; ++i)
    e.hs.push_back(hs_lo + (hs_hi - hs_lo) * static_cast<double>(i) / static_cast<double>(n_hs));
  for (std::size_t j = 0; j <= n_s2; ++j)
    e.s2.push_back(s2_lo + (s2_hi - s2_lo) * static_cast<double>(j) / static_cast<double>(n_s2));
  e.hs.back() = hs_hi;
  e.s2.back() = s2_hi;
  e.validate();
  return e;
}

GridEdges hull_edges(std::span<const EnvPoint> sample, std::size_t n_hs, std::size_t n_s2) {
  if (sample.empty()) throw std::invalid_argument("empty sample");
  double h0 = sample[0].hs, h1 = h0, s0 = sample[0].s2, s1 = s0;
  for (const auto& p : sample) {
    h0 = std::min(h0, p.hs);
    h1 = std::max(h1, p.hs);
    s0 = std::min(s0, p.s2);
    s1 = std::max(s1, p.s2);
  }
  return uniform_edges(h0, h1, n_hs, s0, s1, n_s2);
}

double JointDensityGrid::total_mass() const {
  double s = 0.0;
  for (double m : mass) s += m;
  return s;
}

JointDensityGrid estimate_density_grid(std::span<const EnvPoint> sample, GridEdges edges) {
  edges.validate();
  if (sample.empty()) throw std::invalid_argument("empty sample");
  JointDensityGrid g;
  g.edges = std::move(edges);
  g.n_sim = sample.size();
  std::vector<std::size_t> counts(g.edges.cells(), 0);
  for (const auto& p : sample) {
    const long c = g.edges.locate(p);
    if (c >= 0) ++counts[static_cast<std::size_t>(c)];
  }
  g.mass.resize(counts.size());
  g.density.resize(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    g.mass[c] = static_cast<double>(counts[c]) / static_cast<double>(g.n_sim);
    g.density[c] = g.mass[c] / g.edges.area(c);
  }
  return g;
}

std::string format_density_grid(const JointDensityGrid& grid) {
  std::string out = "hs_lo,hs_hi,s2_lo,s2_hi,mass,density\n";
  for (std::size_t c = 0; c < grid.edges.cells(); ++c) {
    const auto lo = grid.edges.lower(c), hi = grid.edges.upper(c);
    out += fmt::format("{},{},{},{},{},{}\n", lo.hs, hi.hs, lo.s2, hi.s2, grid.mass[c],
                       grid.density[c]);
  }
  return out;
}

JointDensityGrid parse_density_grid(const std::string& text, std::size_t n_sim) {
  std::istringstream in(text);
  const auto t = csv::read(in);
  const auto c_hl = t.column("hs_lo"), c_hh = t.column("hs_hi"), c_sl = t.column("s2_lo"),
             c_sh = t.column("s2_hi"), c_m = t.column("mass");
  std::map<double, double> hs, s2;
  std::vector<std::pair<EnvPoint, double>> cells;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const double hl = csv::to_double(row[c_hl], t.lines[r]);
    const double hh = csv::to_double(row[c_hh], t.lines[r]);
    const double sl = csv::to_double(row[c_sl], t.lines[r]);
    const double sh = csv::to_double(row[c_sh], t.lines[r]);
    hs[hl] = hh;
    s2[sl] = sh;
    cells.push_back({{0.5 * (hl + hh), 0.5 * (sl + sh)}, csv::to_double(row[c_m], t.lines[r])});
  }
  GridEdges e;
  for (const auto& [lo, hi] : hs) e.hs.push_back(lo);
  e.hs.push_back(hs.rbegin()->second);
  for (const auto& [lo, hi] : s2) e.s2.push_back(lo);
  e.s2.push_back(s2.rbegin()->second);
  e.validate();
  if (cells.size() != e.cells()) throw DataError("density grid is not a full rectangle");
  JointDensityGrid g;
  g.edges = e;
  g.n_sim = n_sim;
  g.mass.assign(e.cells(), 0.0);
  g.density.assign(e.cells(), 0.0);
  for (const auto& [mid, m] : cells) {
    const long c = e.locate(mid);
    if (c < 0) throw DataError("density grid cell outside edges");
    g.mass[static_cast<std::size_t>(c)] = m;
    g.density[static_cast<std::size_t>(c)] = m / e.area(static_cast<std::size_t>(c));
  }
  return g;
}

std::string format_env_sample(std::span<const EnvPoint> sample) {
  std::string out = "hs,s2\n";
  for (const auto& p : sample) out += fmt::format("{},{}\n", p.hs, p.s2);
  return out;
}

}  // namespace fcde::condext
