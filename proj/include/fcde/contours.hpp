#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcde/condext.hpp"
#include "fcde/marginal.hpp"
#include "fcde/response.hpp"

namespace fcde::contours {

enum class Family { Gev, Weibull, Lognormal, Gamma };
enum class Form { Linear, Quadratic, Exponential };

std::string to_string(Family f);
std::string to_string(Form f);
Family family_from_string(const std::string& s);
Form form_from_string(const std::string& s);

/// Number of coefficients of a parameter form.
std::size_t form_size(Form f);
/// linear a + b h; quadratic a (h + b)^2 + c; exponential a + b exp(c h).
double eval_form(Form f, const double* coef, double h);

struct ModelSpec {
  Family family = Family::Lognormal;
  bool reflected = false;  // model anchor - S2 instead of S2
  Form form1 = Form::Linear;
  Form form2 = Form::Linear;

  std::size_t n_params() const;
  /// e.g. "lognormal/none/lin/exp".
  std::string label() const;
  static ModelSpec parse(const std::string& label);
  bool operator==(const ModelSpec&) const = default;
};

/// All 4 families x 3 x 3 forms x 2 transforms, in a fixed order.
std::vector<ModelSpec> all_model_specs();

/// Names of the two modelled parameters, e.g. ("mu_L", "sigma_L").
std::pair<std::string, std::string> parameter_names(Family f);

/// Distribution of S2 given hs under a fitted model.
class ConditionalModel {
 public:
  ConditionalModel() = default;
  ConditionalModel(ModelSpec spec, std::vector<double> coefficients, double reflect_anchor);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<double>& coefficients() const { return coef_; }
  double reflect_anchor() const { return anchor_; }
  /// GEV shape (constant in hs); 0 for other families.
  double gev_xi() const;

  /// Family parameters at hs; valid() is false outside their domain.
  struct Params {
    double p1 = 0.0, p2 = 0.0, xi = 0.0;
    bool valid = false;
  };
  Params params(double hs) const;

  double log_density(double s2, double hs) const;
  double cdf(double s2, double hs) const;
  double quantile(double p, double hs) const;

  double log_likelihood = 0.0;
  std::size_t n_obs = 0;
  bool converged = false;
  std::vector<double> standard_errors;

 private:
  ModelSpec spec_;
  std::vector<double> coef_;
  double anchor_ = 0.0;
};

/// Data-derived reflection anchor: max(S2) + 0.1 (max(S2) - min(S2)).
double default_reflect_anchor(std::span<const double> s2);

struct FitOptions {
  bool standard_errors = true;
  int max_evaluations = 20000;
  /// Warm start; the data-driven initializer is used when empty.
  std::vector<double> start;
};

/// Maximum likelihood of sum log f(s2_i | hs_i). Throws DataError with fewer
/// than 50 observations and NumericalError if the search does not converge
/// or no admissible starting point exists.
ConditionalModel fit_conditional_model(std::span<const double> hs, std::span<const double> s2,
                                       const ModelSpec& spec, double reflect_anchor,
                                       const FitOptions& options = {});

struct ScoreSettings {
  std::vector<int> folds{5, 10};
  std::vector<double> tail_quantiles{0.0, 0.8, 0.9};
  int replicates = 30;
  std::uint64_t seed = 1;
  /// Evaluation cap for the warm-started fold fits.
  int cv_max_evaluations = 600;
};

struct CvScore {
  int folds = 0;
  double tail_quantile = 0.0;
  double mean = 0.0;  // mean over replicates of the standardized predictive log-likelihood
  double se = 0.0;    // standard deviation over replicates
};

struct AggregateScore {
  double aic = 0.0;  // (log-likelihood - n_params) / n
  std::vector<CvScore> cv;
  double as = 0.0;
  double se = 0.0;  // standard deviation of the per-replicate aggregate score
  std::string status = "ok";
  bool ok() const { return status == "ok"; }
};

/// Mean predictive log-likelihood of held-out tail folds (tail: hs above its
/// quantile v; the body is always in the training set).
AggregateScore aggregate_score(std::span<const double> hs, std::span<const double> s2,
                               const ModelSpec& spec, double reflect_anchor,
                               const ScoreSettings& settings);

/// Mean of the standardized sub-scores.
double aggregate(double aic, std::span<const double> cv_scores);

struct ZooRow {
  ModelSpec spec;
  AggregateScore score;
  std::vector<double> coefficients;
};

/// Scores every model (in parallel); failures become rows with a
/// non-"ok" status and NaN scores. Rows are returned sorted by AS, best first,
/// failures last.
std::vector<ZooRow> run_model_zoo(std::span<const double> hs, std::span<const double> s2,
                                  const std::vector<ModelSpec>& specs,
                                  const ScoreSettings& settings, std::size_t threads = 0);

std::string format_zoo(const std::vector<ZooRow>& rows, const ScoreSettings& settings);

/// Interfaces for the two factors of the Rosenblatt transform.
class MarginalLaw {
 public:
  virtual ~MarginalLaw() = default;
  virtual double cdf(double x) const = 0;
  virtual double survival(double x) const { return 1.0 - cdf(x); }
  virtual double quantile(double p) const = 0;
  virtual double quantile_upper(double q) const { return quantile(1.0 - q); }
};

class ConditionalLaw {
 public:
  virtual ~ConditionalLaw() = default;
  virtual double cdf(double x2, double x1) const = 0;
  virtual double quantile(double p, double x1) const = 0;
};

class SemiparametricMarginal : public MarginalLaw {
 public:
  explicit SemiparametricMarginal(const marginal::MarginalModel& m) : m_(m) {}
  double cdf(double x) const override { return m_.cdf(x); }
  double survival(double x) const override { return m_.survival(x); }
  double quantile(double p) const override { return m_.quantile(p); }
  double quantile_upper(double q) const override { return m_.quantile_upper(q); }

 private:
  const marginal::MarginalModel& m_;
};

class FittedConditional : public ConditionalLaw {
 public:
  explicit FittedConditional(const ConditionalModel& m) : m_(m) {}
  double cdf(double x2, double x1) const override { return m_.cdf(x2, x1); }
  double quantile(double p, double x1) const override { return m_.quantile(p, x1); }

 private:
  const ConditionalModel& m_;
};

struct UPoint {
  double u1 = 0.0;
  double u2 = 0.0;
};

/// u1 = Phi^-1(F(hs)), u2 = Phi^-1(F(s2 | hs)); probabilities are clamped to
/// [1e-12, 1 - 1e-12] with a warning.
UPoint rosenblatt(condext::EnvPoint x, const MarginalLaw& marginal,
                  const ConditionalLaw& conditional);
condext::EnvPoint inverse_rosenblatt(UPoint u, const MarginalLaw& marginal,
                                     const ConditionalLaw& conditional);

/// Phi^-1(1 - 1/(n_an P)).
double iform_beta(double period, double n_an);

struct Contour {
  std::vector<double> angle, u1, u2, hs, s2;
  double beta = 0.0;
  double period = 0.0;
  double n_an = 0.0;
  std::size_t k = 0;
  condext::EnvPoint center;  // image of u = (0, 0)
  bool clamped = false;      // some points non-finite or probabilities clamped
  std::string label;

  /// Every point finite. Fitted parameter forms extrapolated far beyond the
  /// data can leave the family's domain, which leaves gaps in the curve.
  bool complete() const;
};

Contour iform_contour(const MarginalLaw& marginal, const ConditionalLaw& conditional,
                      double period, double n_an, std::size_t k = 360);

/// Non-zero winding number of the closed contour polygon around p.
bool inside_contour(const Contour& contour, condext::EnvPoint p);
/// Outside the polygon on the large-hs side (hs above the contour centre).
bool beyond_contour(const Contour& contour, condext::EnvPoint p);

/// zeta = 2 * (CDE mass in A_P) - 1 where A_P is everything not beyond the
/// contour; positive when the contour encloses the conditional density.
/// NaN for an incomplete contour, whose polygon would be truncated.
double zeta_overlap(const Contour& contour, const response::CdeGrid& cde);

std::string format_contour(const Contour& contour);

}  // namespace fcde::contours
