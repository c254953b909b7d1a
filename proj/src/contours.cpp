#include "fcde/contours.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>
#include <Eigen/Dense>
#include <fmt/format.h>

#include "fcde/errors.hpp"
#include "fcde/log.hpp"
#include "fcde/optim.hpp"
#include "fcde/parallel.hpp"
#include "fcde/rng.hpp"
#include "fcde/stats.hpp"

namespace fcde::contours {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kEulerGamma = 0.5772156649015329;
constexpr std::size_t kMinObservations = 50;
constexpr double kXiMin = -1.0, kXiMax = 0.5;

// Log density, CDF and quantile of the four families in the modelled variable y.
double family_log_density(Family f, double y, double p1, double p2, double xi) {
  switch (f) {
    case Family::Gev: {
      const double z = (y - p1) / p2;
      if (std::abs(xi) < 1e-9) return -std::log(p2) - z - std::exp(-z);
      const double t = 1.0 + xi * z;
      if (t <= 0.0) return -kInf;
      const double lt = std::log(t);
      return -std::log(p2) - (1.0 + 1.0 / xi) * lt - std::exp(-lt / xi);
    }
    case Family::Weibull: {
      if (y <= 0.0) return -kInf;
      const double lr = std::log(y / p2);
      return std::log(p1 / p2) + (p1 - 1.0) * lr - std::exp(p1 * lr);
    }
    case Family::Lognormal: {
      if (y <= 0.0) return -kInf;
      const double z = (std::log(y) - p1) / p2;
      return -std::log(y) - std::log(p2) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
    }
    case Family::Gamma: {
      if (y <= 0.0) return -kInf;
      int sign = 0;  // lgamma_r: std::lgamma writes the global signgam
      return p1 * std::log(p2) - ::lgamma_r(p1, &sign) + (p1 - 1.0) * std::log(y) - p2 * y;
    }
  }
  return -kInf;
}

double family_cdf(Family f, double y, double p1, double p2, double xi) {
  switch (f) {
    case Family::Gev: {
      const double z = (y - p1) / p2;
      if (std::abs(xi) < 1e-9) return std::exp(-std::exp(-z));
      const double t = 1.0 + xi * z;
      if (t <= 0.0) return xi > 0.0 ? 0.0 : 1.0;
      return std::exp(-std::exp(-std::log(t) / xi));
    }
    case Family::Weibull:
      return y <= 0.0 ? 0.0 : -std::expm1(-std::pow(y / p2, p1));
    case Family::Lognormal:
      return y <= 0.0 ? 0.0 : stats::normal_cdf((std::log(y) - p1) / p2);
    case Family::Gamma:
      if (y <= 0.0) return 0.0;
      try {
        return boost::math::gamma_p(p1, p2 * y);
      } catch (const std::exception&) {
        return kNaN;
      }
  }
  return kNaN;
}

double family_quantile(Family f, double p, double p1, double p2, double xi) {
  switch (f) {
    case Family::Gev: {
      const double lp = -std::log(p);
      if (std::abs(xi) < 1e-9) return p1 - p2 * std::log(lp);
      return p1 + p2 / xi * std::expm1(-xi * std::log(lp));
    }
    case Family::Weibull:
      return p2 * std::pow(-std::log1p(-p), 1.0 / p1);
    case Family::Lognormal:
      return std::exp(p1 + p2 * stats::normal_quantile(p));
    case Family::Gamma:
      try {
        return boost::math::gamma_p_inv(p1, p) / p2;
      } catch (const std::exception&) {
        return kNaN;
      }
  }
  return kNaN;
}

bool params_valid(Family f, double p1, double p2, double xi) {
  if (!std::isfinite(p1) || !std::isfinite(p2)) return false;
  switch (f) {
    case Family::Gev:
      return p2 > 0.0 && xi > kXiMin && xi < kXiMax;
    case Family::Weibull:
    case Family::Gamma:
      return p1 > 0.0 && p2 > 0.0;
    case Family::Lognormal:
      return p2 > 0.0;
  }
  return false;
}

struct Dataset {
  std::vector<double> h, y;  // y in the modelled (possibly reflected) variable
  double h_lo = 0.0, h_hi = 0.0;  // parameters must be valid over this hs range
};

// Range over which fitted parameters must stay in their domain: from the
// smallest observed hs to twice the largest, which covers the contours.
constexpr double kDomainStretch = 2.0;

Dataset make_dataset(std::span<const double> hs, std::span<const double> s2, bool reflected,
                     double anchor, std::span<const std::size_t> idx = {}) {
  Dataset d;
  const auto [lo, hi] = std::minmax_element(hs.begin(), hs.end());
  if (lo != hs.end()) {
    d.h_lo = *lo;
    d.h_hi = kDomainStretch * *hi;
  }
  auto add = [&](std::size_t i) {
    d.h.push_back(hs[i]);
    d.y.push_back(reflected ? anchor - s2[i] : s2[i]);
  };
  if (idx.empty()) {
    for (std::size_t i = 0; i < hs.size(); ++i) add(i);
  } else {
    for (auto i : idx) add(i);
  }
  return d;
}

double dataset_log_likelihood(const ModelSpec& spec, const double* coef, const Dataset& d) {
  const std::size_t n1 = form_size(spec.form1), n2 = form_size(spec.form2);
  const double xi = spec.family == Family::Gev ? coef[n1 + n2] : 0.0;
  // Each parameter is monotone or has one turning point on the range, so the
  // endpoints and the quadratic vertices bound it.
  double probe[4] = {d.h_lo, d.h_hi, d.h_lo, d.h_lo};
  if (spec.form1 == Form::Quadratic) probe[2] = std::clamp(-coef[1], d.h_lo, d.h_hi);
  if (spec.form2 == Form::Quadratic) probe[3] = std::clamp(-coef[n1 + 1], d.h_lo, d.h_hi);
  for (double h : probe)
    if (!params_valid(spec.family, eval_form(spec.form1, coef, h),
                      eval_form(spec.form2, coef + n1, h), xi))
      return -kInf;
  double ll = 0.0;
  for (std::size_t i = 0; i < d.h.size(); ++i) {
    const double p1 = eval_form(spec.form1, coef, d.h[i]);
    const double p2 = eval_form(spec.form2, coef + n1, d.h[i]);
    if (!params_valid(spec.family, p1, p2, xi)) return -kInf;
    ll += family_log_density(spec.family, d.y[i], p1, p2, xi);
  }
  return std::isfinite(ll) ? ll : -kInf;
}

// Least-squares fit of a form to (h, value) pairs.
std::vector<double> fit_form(Form form, const std::vector<double>& h,
                             const std::vector<double>& v) {
  const std::size_t n = h.size();
  const double hbar = stats::mean(h);
  const double vbar = stats::mean(v);
  auto linear = [&](const std::vector<double>& x) {
    const double xb = stats::mean(x);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (x[i] - xb) * (v[i] - vbar);
      sxx += (x[i] - xb) * (x[i] - xb);
    }
    const double b = sxx > 0.0 ? sxy / sxx : 0.0;
    return std::pair{vbar - b * xb, b};
  };
  const double range = std::max(*std::max_element(h.begin(), h.end()) -
                                    *std::min_element(h.begin(), h.end()),
                                1e-6);
  switch (form) {
    case Form::Linear: {
      const auto [a, b] = linear(h);
      return {a, b};
    }
    case Form::Quadratic: {
      Eigen::MatrixXd X(n, 3);
      Eigen::VectorXd y(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double c = h[i] - hbar;
        X(static_cast<Eigen::Index>(i), 0) = 1.0;
        X(static_cast<Eigen::Index>(i), 1) = c;
        X(static_cast<Eigen::Index>(i), 2) = c * c;
        y(static_cast<Eigen::Index>(i)) = v[i];
      }
      Eigen::Vector3d beta = X.colPivHouseholderQr().solve(y);
      double a = beta(2);
      // Keep the vertex within a few ranges of the data so b stays well scaled.
      const double min_curv = std::abs(beta(1)) / (2.0 * 5.0 * range) + 1e-12;
      if (std::abs(a) < min_curv) a = (a < 0.0 ? -1.0 : 1.0) * min_curv;
      const double b_centered = beta(1) / (2.0 * a);
      const double c = beta(0) - a * b_centered * b_centered;
      return {a, b_centered - hbar, c};
    }
    case Form::Exponential: {
      std::vector<double> best{vbar, 0.0, 0.1 / range};
      double best_sse = kInf;
      for (double m : {-4.0, -2.0, -1.0, -0.3, -0.1, 0.1, 0.3, 1.0, 2.0, 4.0}) {
        const double c = m / range;
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(c * (h[i] - hbar));
        const auto [a, b] = linear(x);
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) sse += std::pow(v[i] - a - b * x[i], 2);
        if (sse < best_sse) {
          best_sse = sse;
          best = {a, b * std::exp(-c * hbar), c};
        }
      }
      return best;
    }
  }
  return {};
}

std::vector<double> constant_form(Form form, double value, double range) {
  switch (form) {
    case Form::Linear:
      return {value, 0.0};
    case Form::Quadratic:
      return {0.0, 0.0, value};
    case Form::Exponential:
      return {value, 0.0, 0.1 / range};
  }
  return {};
}

// Moment-type estimates of the two family parameters (and GEV shape) for a sample.
std::array<double, 3> moment_params(Family f, std::vector<double> y) {
  const double m = stats::mean(y);
  const double sd = std::max(stats::stddev(y), 1e-12);
  std::vector<double> ly;
  for (double v : y) ly.push_back(std::log(std::max(v, 1e-300)));
  switch (f) {
    case Family::Gev: {
      const double sigma = sd * std::sqrt(6.0) / std::numbers::pi;
      return {m - kEulerGamma * sigma, sigma, -0.1};
    }
    case Family::Weibull: {
      const double k = std::numbers::pi / (std::max(stats::stddev(ly), 1e-6) * std::sqrt(6.0));
      return {k, std::exp(stats::mean(ly) + kEulerGamma / k), 0.0};
    }
    case Family::Lognormal:
      return {stats::mean(ly), std::max(stats::stddev(ly), 1e-6), 0.0};
    case Family::Gamma:
      return {m * m / (sd * sd), m / (sd * sd), 0.0};
  }
  return {};
}

std::vector<double> initial_coefficients(const ModelSpec& spec, const Dataset& d) {
  const std::size_t n = d.h.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d.h[a] < d.h[b]; });
  const std::size_t bins = std::clamp<std::size_t>(n / 40, 3, 10);
  std::vector<double> hb, p1, p2, xis;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins, hi = (b + 1) * n / bins;
    std::vector<double> hv, yv;
    for (std::size_t i = lo; i < hi; ++i) {
      hv.push_back(d.h[order[i]]);
      yv.push_back(d.y[order[i]]);
    }
    const auto p = moment_params(spec.family, yv);
    hb.push_back(stats::mean(hv));
    p1.push_back(p[0]);
    p2.push_back(p[1]);
    xis.push_back(p[2]);
  }
  const double range = std::max(hb.back() - hb.front(), 1e-6);
  auto build = [&](bool constant) {
    std::vector<double> c;
    const auto all = moment_params(spec.family, d.y);
    auto a = constant ? constant_form(spec.form1, all[0], range) : fit_form(spec.form1, hb, p1);
    auto b = constant ? constant_form(spec.form2, all[1], range) : fit_form(spec.form2, hb, p2);
    c.insert(c.end(), a.begin(), a.end());
    c.insert(c.end(), b.begin(), b.end());
    if (spec.family == Family::Gev) c.push_back(all[2]);
    return c;
  };
  auto coef = build(false);
  if (std::isfinite(dataset_log_likelihood(spec, coef.data(), d))) return coef;
  coef = build(true);
  if (std::isfinite(dataset_log_likelihood(spec, coef.data(), d))) return coef;
  if (spec.family == Family::Gev) {
    for (double xi : {0.0, 0.1, 0.3}) {
      coef.back() = xi;
      if (std::isfinite(dataset_log_likelihood(spec, coef.data(), d))) return coef;
    }
  }
  throw NumericalError(fmt::format("no admissible starting point for {}", spec.label()));
}

std::vector<double> simplex_steps(const ModelSpec& spec, const std::vector<double>& coef) {
  const std::size_t n1 = form_size(spec.form1), n2 = form_size(spec.form2);
  std::vector<double> steps(coef.size());
  auto fill = [&](std::size_t from, std::size_t count) {
    double typ = 0.0;
    for (std::size_t i = from; i < from + count; ++i) typ = std::max(typ, std::abs(coef[i]));
    typ = std::max(typ, 1e-6);
    for (std::size_t i = from; i < from + count; ++i)
      steps[i] = std::abs(coef[i]) > 1e-3 * typ ? 0.1 * std::abs(coef[i]) : 0.01 * typ;
  };
  fill(0, n1);
  fill(n1, n2);
  if (spec.family == Family::Gev) steps.back() = 0.05;
  return steps;
}

struct RawFit {
  std::vector<double> coef;
  double loglik = -kInf;
  bool converged = false;
};

RawFit maximize(const ModelSpec& spec, const Dataset& d, std::vector<double> start, int max_evals,
                int restarts, double f_tolerance = 1e-11, double x_tolerance = 1e-7,
                double step_scale = 1.0) {
  auto objective = [&](std::span<const double> c) {
    return -dataset_log_likelihood(spec, c.data(), d);
  };
  optim::NelderMeadOptions opts;
  opts.max_evaluations = max_evals;
  opts.f_tolerance = f_tolerance;
  opts.x_tolerance = x_tolerance;
  RawFit out;
  out.coef = start;
  out.loglik = -objective(start);
  for (int attempt = 0; attempt <= restarts; ++attempt) {
    opts.step = simplex_steps(spec, out.coef);
    for (auto& h : opts.step) h *= step_scale;
    const double before = out.loglik;
    auto r = optim::nelder_mead(objective, out.coef, opts);
    if (-r.value >= out.loglik) {
      out.coef = r.x;
      out.loglik = -r.value;
    }
    if (restarts > 0) {
      // Simplex searches crawl along curved ridges; finish with Newton steps.
      std::vector<double> h(out.coef.size());
      for (std::size_t i = 0; i < h.size(); ++i) h[i] = 1e-5 * std::max(std::abs(out.coef[i]), 1e-3);
      r = optim::newton_refine(objective, out.coef, h);
      if (-r.value >= out.loglik) {
        out.coef = r.x;
        out.loglik = -r.value;
      }
    }
    const double improvement = out.loglik - before;
    if (attempt > 0 && improvement <= 1e-7 * (1.0 + std::abs(out.loglik))) {
      out.converged = true;
      break;
    }
  }
  return out;
}

std::vector<double> relative_steps(const std::vector<double>& c) {
  std::vector<double> h(c.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = 1e-4 * std::max(std::abs(c[i]), 1e-3);
  return h;
}

// Coordinates theta = centre + T z whitened by the full-data Hessian, so that
// one unit of z is about one standard error. Fold refits start at z = 0 (the
// full-data optimum). In raw coordinates the exponential and quadratic forms
// can be so ill-conditioned that a warm-started search never leaves the start,
// which would leak the held-out points into the score.
struct FoldSpace {
  std::vector<double> centre;
  Eigen::MatrixXd t;
  std::size_t n = 0;  // observations behind the metric
  bool ok = false;

  std::vector<double> coef(std::span<const double> z) const {
    std::vector<double> c(centre);
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j)
        c[static_cast<std::size_t>(i)] += t(i, j) * z[static_cast<std::size_t>(j)];
    return c;
  }
};

FoldSpace fold_space(const ModelSpec& spec, const Dataset& d, const std::vector<double>& centre) {
  auto negll = [&](std::span<const double> c) { return -dataset_log_likelihood(spec, c.data(), d); };
  FoldSpace s;
  s.centre = centre;
  s.n = d.h.size();
  const Eigen::MatrixXd h =
      optim::hessian(negll, centre, optim::curvature_steps(negll, centre, relative_steps(centre)));
  if (!h.allFinite()) return s;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  if (eig.info() != Eigen::Success) return s;
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return s;
  Eigen::VectorXd scale(h.rows());
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    scale(i) = 1.0 / std::sqrt(std::max(eig.eigenvalues()(i), 1e-10 * top));
  s.t = eig.eigenvectors() * scale.asDiagonal();
  s.ok = true;
  return s;
}

RawFit refit_fold(const ModelSpec& spec, const Dataset& d, const FoldSpace& space,
                  int max_evals) {
  if (!space.ok) return maximize(spec, d, space.centre, max_evals, 0, 1e-8, 1e-4, 0.1);
  auto objective = [&](std::span<const double> z) {
    const auto c = space.coef(z);
    return -dataset_log_likelihood(spec, c.data(), d);
  };
  const std::size_t n = space.centre.size();
  const std::vector<double> h(n, 1e-3);
  // The training Hessian in these coordinates is about (n_train / n) I.
  const double inverse = static_cast<double>(space.n) / static_cast<double>(d.h.size());
  auto r = optim::bfgs(objective, std::vector<double>(n, 0.0), h, inverse, 100, 1e-4);
  if (!r.converged) {
    optim::NelderMeadOptions opts;
    opts.max_evaluations = max_evals;
    opts.f_tolerance = 1e-10;
    opts.x_tolerance = 1e-4;
    opts.step.assign(n, 1.0);
    const auto simplex = optim::nelder_mead(objective, r.x, opts);
    if (simplex.value < r.value) r = simplex;
  }
  RawFit out;
  out.coef = space.coef(r.x);
  out.loglik = -r.value;
  out.converged = std::isfinite(r.value);
  return out;
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::Gev:
      return "gev";
    case Family::Weibull:
      return "weibull";
    case Family::Lognormal:
      return "lognormal";
    case Family::Gamma:
      return "gamma";
  }
  return "?";
}

std::string to_string(Form f) {
  switch (f) {
    case Form::Linear:
      return "lin";
    case Form::Quadratic:
      return "qua";
    case Form::Exponential:
      return "exp";
  }
  return "?";
}

Family family_from_string(const std::string& s) {
  for (auto f : {Family::Gev, Family::Weibull, Family::Lognormal, Family::Gamma})
    if (to_string(f) == s) return f;
  throw ConfigError(fmt::format("unknown distribution family '{}'", s));
}

Form form_from_string(const std::string& s) {
  for (auto f : {Form::Linear, Form::Quadratic, Form::Exponential})
    if (to_string(f) == s) return f;
  throw ConfigError(fmt::format("unknown parameter form '{}'", s));
}

std::size_t form_size(Form f) { return f == Form::Linear ? 2 : 3; }

double eval_form(Form f, const double* c, double h) {
  switch (f) {
    case Form::Linear:
      return c[0] + c[1] * h;
    case Form::Quadratic:
      return c[0] * (h + c[1]) * (h + c[1]) + c[2];
    case Form::Exponential:
      return c[0] + c[1] * std::exp(c[2] * h);
  }
  return kNaN;
}

std::size_t ModelSpec::n_params() const {
  return form_size(form1) + form_size(form2) + (family == Family::Gev ? 1 : 0);
}

std::string ModelSpec::label() const {
  return fmt::format("{}/{}/{}/{}", to_string(family), reflected ? "reflected" : "none",
                     to_string(form1), to_string(form2));
}

ModelSpec ModelSpec::parse(const std::string& label) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto slash = label.find('/', start);
    parts.push_back(label.substr(start, slash - start));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  if (parts.size() != 4) throw ConfigError(fmt::format("malformed model label '{}'", label));
  ModelSpec s;
  s.family = family_from_string(parts[0]);
  if (parts[1] != "none" && parts[1] != "reflected")
    throw ConfigError(fmt::format("unknown transform '{}'", parts[1]));
  s.reflected = parts[1] == "reflected";
  s.form1 = form_from_string(parts[2]);
  s.form2 = form_from_string(parts[3]);
  return s;
}

std::vector<ModelSpec> all_model_specs() {
  std::vector<ModelSpec> out;
  for (bool reflected : {false, true})
    for (auto fam : {Family::Gev, Family::Weibull, Family::Lognormal, Family::Gamma})
      for (auto f1 : {Form::Linear, Form::Quadratic, Form::Exponential})
        for (auto f2 : {Form::Linear, Form::Quadratic, Form::Exponential})
          out.push_back({fam, reflected, f1, f2});
  return out;
}

std::pair<std::string, std::string> parameter_names(Family f) {
  switch (f) {
    case Family::Gev:
      return {"mu_G", "sigma_G"};
    case Family::Weibull:
      return {"k", "lambda"};
    case Family::Lognormal:
      return {"mu_L", "sigma_L"};
    case Family::Gamma:
      return {"alpha", "beta"};
  }
  return {};
}

ConditionalModel::ConditionalModel(ModelSpec spec, std::vector<double> coefficients,
                                   double reflect_anchor)
    : spec_(spec), coef_(std::move(coefficients)), anchor_(reflect_anchor) {
  if (coef_.size() != spec_.n_params())
    throw std::invalid_argument("conditional model: coefficient count does not match the forms");
}

double ConditionalModel::gev_xi() const {
  return spec_.family == Family::Gev ? coef_.back() : 0.0;
}

ConditionalModel::Params ConditionalModel::params(double hs) const {
  Params p;
  p.p1 = eval_form(spec_.form1, coef_.data(), hs);
  p.p2 = eval_form(spec_.form2, coef_.data() + form_size(spec_.form1), hs);
  p.xi = gev_xi();
  p.valid = params_valid(spec_.family, p.p1, p.p2, p.xi);
  return p;
}

double ConditionalModel::log_density(double s2, double hs) const {
  const auto p = params(hs);
  if (!p.valid) return -kInf;
  const double y = spec_.reflected ? anchor_ - s2 : s2;
  return family_log_density(spec_.family, y, p.p1, p.p2, p.xi);
}

double ConditionalModel::cdf(double s2, double hs) const {
  const auto p = params(hs);
  if (!p.valid) return kNaN;
  if (!spec_.reflected) return family_cdf(spec_.family, s2, p.p1, p.p2, p.xi);
  return 1.0 - family_cdf(spec_.family, anchor_ - s2, p.p1, p.p2, p.xi);
}

double ConditionalModel::quantile(double prob, double hs) const {
  if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("quantile: p outside (0,1)");
  const auto p = params(hs);
  if (!p.valid) return kNaN;
  if (!spec_.reflected) return family_quantile(spec_.family, prob, p.p1, p.p2, p.xi);
  return anchor_ - family_quantile(spec_.family, 1.0 - prob, p.p1, p.p2, p.xi);
}

double default_reflect_anchor(std::span<const double> s2) {
  const auto [lo, hi] = std::minmax_element(s2.begin(), s2.end());
  return *hi + 0.1 * (*hi - *lo);
}

ConditionalModel fit_conditional_model(std::span<const double> hs, std::span<const double> s2,
                                       const ModelSpec& spec, double reflect_anchor,
                                       const FitOptions& options) {
  if (hs.size() != s2.size()) throw std::invalid_argument("hs and s2 differ in length");
  if (hs.size() < kMinObservations)
    throw DataError(fmt::format("conditional model needs >= {} observations", kMinObservations));
  const auto d = make_dataset(hs, s2, spec.reflected, reflect_anchor);
  if (spec.reflected)
    for (double y : d.y)
      if (!(y > 0.0)) throw DataError("reflection anchor must exceed every S2 value");
  auto start = options.start.empty() ? initial_coefficients(spec, d) : options.start;
  if (start.size() != spec.n_params()) throw std::invalid_argument("start has wrong length");
  const auto raw = maximize(spec, d, start, options.max_evaluations, 5);
  if (!std::isfinite(raw.loglik))
    throw NumericalError(fmt::format("{}: likelihood not finite at the optimum", spec.label()));
  if (!raw.converged)
    throw NumericalError(fmt::format("{}: maximization did not converge after restarts",
                                     spec.label()));
  ConditionalModel m(spec, raw.coef, reflect_anchor);
  m.log_likelihood = raw.loglik;
  m.n_obs = hs.size();
  m.converged = true;
  if (options.standard_errors) {
    auto negll = [&](std::span<const double> c) {
      return -dataset_log_likelihood(spec, c.data(), d);
    };
    m.standard_errors = optim::standard_errors(
        optim::hessian(negll, raw.coef, optim::curvature_steps(negll, raw.coef, relative_steps(raw.coef))));
  }
  return m;
}

double aggregate(double aic, std::span<const double> cv_scores) {
  double s = aic;
  for (double v : cv_scores) s += v;
  return s / static_cast<double>(cv_scores.size() + 1);
}

namespace {

AggregateScore score_fitted(std::span<const double> hs, std::span<const double> s2,
                            const ConditionalModel& full, double reflect_anchor,
                            const ScoreSettings& settings) {
  if (settings.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  const ModelSpec& spec = full.spec();
  const double n = static_cast<double>(hs.size());

  AggregateScore score;
  score.aic = (full.log_likelihood - static_cast<double>(spec.n_params())) / n;

  std::vector<double> sorted_hs(hs.begin(), hs.end());
  std::sort(sorted_hs.begin(), sorted_hs.end());
  const auto space = fold_space(spec, make_dataset(hs, s2, spec.reflected, reflect_anchor),
                                full.coefficients());

  const std::size_t n_settings = settings.folds.size() * settings.tail_quantiles.size();
  // per_rep[r][s]: standardized CV score of setting s in replicate r
  std::vector<std::vector<double>> per_rep(static_cast<std::size_t>(settings.replicates),
                                           std::vector<double>(n_settings));
  std::size_t s_index = 0;
  for (double pv : settings.tail_quantiles) {
    std::vector<std::size_t> body, tail;
    const double v = pv > 0.0 ? stats::quantile_sorted(sorted_hs, pv) : -kInf;
    for (std::size_t i = 0; i < hs.size(); ++i) (hs[i] > v ? tail : body).push_back(i);
    for (int K : settings.folds) {
      if (tail.size() < static_cast<std::size_t>(K) || tail.empty())
        throw DataError(fmt::format("empty tail: {} points above the {} quantile for {} folds",
                                    tail.size(), pv, K));
      for (int r = 0; r < settings.replicates; ++r) {
        // Fold assignment depends only on (v, K, replicate), so every model sees the same folds.
        Rng rng = make_rng(settings.seed, s_index * 100003ULL + static_cast<std::uint64_t>(r));
        auto shuffled = tail;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        double total = 0.0;
        for (int k = 0; k < K; ++k) {
          std::vector<std::size_t> train = body, test;
          for (std::size_t j = 0; j < shuffled.size(); ++j)
            (j % static_cast<std::size_t>(K) == static_cast<std::size_t>(k) ? test : train)
                .push_back(shuffled[j]);
          const auto dtrain = make_dataset(hs, s2, spec.reflected, reflect_anchor, train);
          const auto fit = refit_fold(spec, dtrain, space, settings.cv_max_evaluations);
          const auto dtest = make_dataset(hs, s2, spec.reflected, reflect_anchor, test);
          total += dataset_log_likelihood(spec, fit.coef.data(), dtest);
        }
        per_rep[static_cast<std::size_t>(r)][s_index] = total / static_cast<double>(tail.size());
      }
      CvScore cv;
      cv.folds = K;
      cv.tail_quantile = pv;
      std::vector<double> vals;
      for (const auto& row : per_rep) vals.push_back(row[s_index]);
      cv.mean = stats::mean(vals);
      cv.se = settings.replicates > 1 ? stats::stddev(vals) : 0.0;
      score.cv.push_back(cv);
      ++s_index;
    }
  }
  std::vector<double> as_rep;
  for (const auto& row : per_rep) as_rep.push_back(aggregate(score.aic, row));
  score.as = stats::mean(as_rep);
  score.se = settings.replicates > 1 ? stats::stddev(as_rep) : 0.0;
  if (!std::isfinite(score.se)) score.se = 0.0;
  return score;
}

}  // namespace

AggregateScore aggregate_score(std::span<const double> hs, std::span<const double> s2,
                               const ModelSpec& spec, double reflect_anchor,
                               const ScoreSettings& settings) {
  FitOptions opts;
  opts.standard_errors = false;
  const auto full = fit_conditional_model(hs, s2, spec, reflect_anchor, opts);
  return score_fitted(hs, s2, full, reflect_anchor, settings);
}

std::vector<ZooRow> run_model_zoo(std::span<const double> hs, std::span<const double> s2,
                                  const std::vector<ModelSpec>& specs,
                                  const ScoreSettings& settings, std::size_t threads) {
  const double anchor = default_reflect_anchor(s2);
  std::vector<ZooRow> rows(specs.size());
  parallel_for(
      specs.size(),
      [&](std::size_t i) {
        rows[i].spec = specs[i];
        try {
          FitOptions o;
          o.standard_errors = false;
          const auto full = fit_conditional_model(hs, s2, specs[i], anchor, o);
          rows[i].coefficients = full.coefficients();
          rows[i].score = score_fitted(hs, s2, full, anchor, settings);
        } catch (const std::exception& e) {
          rows[i].score = AggregateScore{};
          rows[i].score.aic = rows[i].score.as = rows[i].score.se = kNaN;
          rows[i].score.status = fmt::format("failed: {}", e.what());
        }
      },
      threads);
  std::stable_sort(rows.begin(), rows.end(), [](const ZooRow& a, const ZooRow& b) {
    const bool fa = a.score.ok() && !std::isnan(a.score.as);
    const bool fb = b.score.ok() && !std::isnan(b.score.as);
    if (fa != fb) return fa;
    if (!fa) return false;
    if (a.score.as != b.score.as) return a.score.as > b.score.as;
    return a.score.aic > b.score.aic;
  });
  return rows;
}

std::string format_zoo(const std::vector<ZooRow>& rows, const ScoreSettings& settings) {
  std::string out = "family,transform,form_p1,form_p2,aic";
  for (double pv : settings.tail_quantiles)
    for (int K : settings.folds) out += fmt::format(",cv_{:.1f}_{}", pv, K);
  out += ",as,se,status\n";
  auto num = [](double v) { return std::isnan(v) ? std::string() : fmt::format("{}", v); };
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}", to_string(r.spec.family),
                       r.spec.reflected ? "reflected" : "none", to_string(r.spec.form1),
                       to_string(r.spec.form2), num(r.score.aic));
    const std::size_t n_settings = settings.folds.size() * settings.tail_quantiles.size();
    for (std::size_t s = 0; s < n_settings; ++s) {
      if (s < r.score.cv.size())
        out += "," + num(r.score.cv[s].mean);
      else
        out += ",";
    }
    std::string status = r.score.status;
    std::replace(status.begin(), status.end(), ',', ';');
    out += fmt::format(",{},{},{}\n", num(r.score.as), num(r.score.se), status);
  }
  return out;
}

namespace {

double clamp_probability(double p, bool& clamped) {
  constexpr double lo = 1e-12;
  if (std::isnan(p)) {
    clamped = true;
    return kNaN;
  }
  if (p < lo || p > 1.0 - lo) {
    clamped = true;
    log::warn_once("rosenblatt-clamp", "Rosenblatt probability clamped to [1e-12, 1-1e-12]");
    return std::clamp(p, lo, 1.0 - lo);
  }
  return p;
}

}  // namespace

UPoint rosenblatt(condext::EnvPoint x, const MarginalLaw& marginal,
                  const ConditionalLaw& conditional) {
  bool clamped = false;
  UPoint u;
  const double F = marginal.cdf(x.hs);
  if (F > 0.5)
    u.u1 = -stats::normal_quantile(clamp_probability(marginal.survival(x.hs), clamped));
  else
    u.u1 = stats::normal_quantile(clamp_probability(F, clamped));
  const double F2 = clamp_probability(conditional.cdf(x.s2, x.hs), clamped);
  u.u2 = std::isnan(F2) ? kNaN : stats::normal_quantile(F2);
  return u;
}

condext::EnvPoint inverse_rosenblatt(UPoint u, const MarginalLaw& marginal,
                                     const ConditionalLaw& conditional) {
  condext::EnvPoint x;
  x.hs = u.u1 > 0.0 ? marginal.quantile_upper(stats::normal_cdf(-u.u1))
                    : marginal.quantile(stats::normal_cdf(u.u1));
  x.s2 = conditional.quantile(stats::normal_cdf(u.u2), x.hs);
  return x;
}

double iform_beta(double period, double n_an) {
  if (!(period >= 1.0) || !(n_an > 0.0))
    throw std::invalid_argument("iform: need P >= 1 and n_an > 0");
  const double q = 1.0 / (n_an * period);
  if (!(q < 1.0)) throw std::invalid_argument("iform: 1/(n_an P) must be < 1");
  return -stats::normal_quantile(q);
}

Contour iform_contour(const MarginalLaw& marginal, const ConditionalLaw& conditional,
                      double period, double n_an, std::size_t k) {
  if (k < 8) throw std::invalid_argument("iform: k must be >= 8");
  Contour c;
  c.beta = iform_beta(period, n_an);
  c.period = period;
  c.n_an = n_an;
  c.k = k;
  c.center = inverse_rosenblatt({0.0, 0.0}, marginal, conditional);
  for (std::size_t i = 0; i < k; ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    const UPoint u{c.beta * std::cos(theta), c.beta * std::sin(theta)};
    condext::EnvPoint x{kNaN, kNaN};
    try {
      x = inverse_rosenblatt(u, marginal, conditional);
    } catch (const std::exception&) {
    }
    if (!std::isfinite(x.hs) || !std::isfinite(x.s2)) c.clamped = true;
    c.angle.push_back(theta);
    c.u1.push_back(u.u1);
    c.u2.push_back(u.u2);
    c.hs.push_back(x.hs);
    c.s2.push_back(x.s2);
  }
  if (c.clamped)
    log::warn(fmt::format("IFORM contour (P = {}) has non-finite points at beta = {:.4f}", period,
                          c.beta));
  return c;
}

namespace {

struct Vertex {
  double x, y;
};

std::vector<Vertex> polygon(const Contour& c) {
  std::vector<Vertex> v;
  for (std::size_t i = 0; i < c.hs.size(); ++i)
    if (std::isfinite(c.hs[i]) && std::isfinite(c.s2[i])) v.push_back({c.s2[i], c.hs[i]});
  if (v.size() < 3) throw std::invalid_argument("degenerate contour polygon");
  double area = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& a = v[i];
    const auto& b = v[(i + 1) % v.size()];
    area += a.x * b.y - b.x * a.y;
  }
  if (!(std::abs(area) > 0.0)) throw std::invalid_argument("degenerate contour polygon");
  return v;
}

int winding_number(const std::vector<Vertex>& v, Vertex p) {
  int wn = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& a = v[i];
    const auto& b = v[(i + 1) % v.size()];
    const double left = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && left > 0.0) ++wn;
    } else if (b.y <= p.y && left < 0.0) {
      --wn;
    }
  }
  return wn;
}

}  // namespace

bool inside_contour(const Contour& contour, condext::EnvPoint p) {
  return winding_number(polygon(contour), {p.s2, p.hs}) != 0;
}

bool beyond_contour(const Contour& contour, condext::EnvPoint p) {
  return p.hs > contour.center.hs && !inside_contour(contour, p);
}

bool Contour::complete() const {
  for (std::size_t i = 0; i < hs.size(); ++i)
    if (!std::isfinite(hs[i]) || !std::isfinite(s2[i])) return false;
  return !hs.empty();
}

double zeta_overlap(const Contour& contour, const response::CdeGrid& cde) {
  if (!contour.complete()) return kNaN;
  const auto poly = polygon(contour);
  double mass = 0.0;
  for (std::size_t c = 0; c < cde.edges.cells(); ++c) {
    const auto m = cde.edges.midpoint(c);
    const bool beyond = m.hs > contour.center.hs && winding_number(poly, {m.s2, m.hs}) == 0;
    if (!beyond) mass += cde.value[c] * cde.edges.area(c);
  }
  return std::clamp(2.0 * mass - 1.0, -1.0, 1.0);
}

std::string format_contour(const Contour& contour) {
  std::string out = "angle,u1,u2,hs,s2\n";
  for (std::size_t i = 0; i < contour.angle.size(); ++i)
    out += fmt::format("{},{},{},{},{}\n", contour.angle[i], contour.u1[i], contour.u2[i],
                       contour.hs[i], contour.s2[i]);
  return out;
}

}  // namespace fcde::contours
