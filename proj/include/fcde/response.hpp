#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "fcde/condext.hpp"
#include "fcde/waves.hpp"

namespace fcde::response {

inline constexpr double kWaterDensity = 1024.0;
/// log(0) stand-in in exceedance maps; just below the smallest subnormal's log.
inline constexpr double kLogZero = -745.0;

/// Coefficients apply on the half-open band (z_lo, z_hi]; the lowest band
/// also owns its lower edge.
struct CoefficientBand {
  double z_lo = 0.0;
  double z_hi = 0.0;
  double cd = 1.0;
  double cm = 1.0;
};

struct StructureSpec {
  std::string name;
  double depth = 100.0;
  double diameter = 1.0;
  double height = 150.0;  // measured from the seabed
  std::vector<CoefficientBand> bands;

  double top() const { return height - depth; }
  double volume_per_length() const;  // pi D^2 / 4
  double area_per_length() const;    // D
  double cd_at(double z) const;
  double cm_at(double z) const;
  /// Same geometry with every cd and cm multiplied by `factor`.
  StructureSpec scaled(double factor) const;
  /// Bands must be ordered, contiguous and cover [-depth, height - depth].
  void validate() const;
};

StructureSpec parse_structure(std::istream& in, std::string name = {});
StructureSpec load_structure(const std::filesystem::path& path);
std::string format_structure(const StructureSpec& s);

/// Reference structures: 'A' (unit coefficients), 'B' (x100 for 5 < z <= 15),
/// 'C' (x100 for -95 < z <= -85); diameter 1 m, height 150 m, depth 100 m.
StructureSpec reference_structure(char which);

/// Base shear at time index `it`: the Morison load integrated from the seabed
/// to min(eta, top), trapezoidal on the union of kinematic levels and
/// coefficient breakpoints.
double base_shear_at(const waves::WaveField& field, const StructureSpec& structure, std::size_t it);
std::vector<double> morison_base_shear(const waves::WaveField& field,
                                       const StructureSpec& structure);
/// Throws std::invalid_argument when the field cannot carry the structure.
void check_compatible(const waves::WaveField& field, const StructureSpec& structure);

/// Maximum of `series` over t in [-t2/2, t2/2].
double max_response_single_wave(std::span<const double> series, std::span<const double> t,
                                double t2);

struct SeaState {
  double hs = 0.0;
  double s2 = 0.0;
  double t2() const;
};

double rayleigh_crest_density(double c, double hs);
double waves_per_sea_state(double hours, double t2);

struct WeightedResponse {
  double crest = 0.0;
  double response = 0.0;
  double weight = 0.0;
};

struct WeightedResponseSample {
  std::vector<WeightedResponse> entries;
  double epsilon = 2.0;
  SeaState seastate;
};

struct ResponseSimOptions {
  waves::WaveGrid grid;
  waves::JonswapParams jonswap;
  std::size_t threads = 1;  // 0 = process default
};

/// Per-wave maxima for given crests; wave i uses seed derive_seed(seed, i + 1).
/// Returns one response vector per structure.
std::vector<std::vector<double>> simulate_responses(SeaState x,
                                                    std::span<const StructureSpec> structures,
                                                    std::span<const double> crests,
                                                    std::uint64_t seed,
                                                    const ResponseSimOptions& options = {});

/// Crests uniform on [0, epsilon hs] with Rayleigh importance weights. The same
/// waves are reused for every structure.
std::vector<WeightedResponseSample> simulate_response_samples(
    SeaState x, std::span<const StructureSpec> structures, std::size_t k, double epsilon,
    std::uint64_t seed, const ResponseSimOptions& options = {});

WeightedResponseSample simulate_response_sample(SeaState x, const StructureSpec& structure,
                                                std::size_t k, double epsilon, std::uint64_t seed,
                                                const ResponseSimOptions& options = {});

/// Weighted ECDF of the per-wave maximum, powered to Q_L waves per sea state.
class ResponseDistribution {
 public:
  ResponseDistribution() = default;
  ResponseDistribution(std::span<const double> responses, std::span<const double> weights,
                       double q_l);

  double q_l() const { return q_l_; }
  std::size_t atoms() const { return n_atoms_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& cumulative() const { return cum_; }
  double max_knot() const { return knots_.back(); }

  double cdf_single(double r) const;
  double cdf(double r) const;
  /// 1 - F_RL(r) without cancellation.
  double survival(double r) const;
  /// log(1 - F_RL(r)), -inf where the estimate is zero.
  double log_survival(double r) const;

  /// 1.06 * weighted sd * k^(-1/5).
  double default_bandwidth() const;
  double smoothed_cdf_single(double r, double h) const;
  double smoothed_density_single(double r, double h) const;
  /// Q F~^(Q-1) f~ with Gaussian-kernel smoothing at bandwidth h.
  double density(double r, double h) const;

 private:
  double tail_single(double r) const;

  std::vector<double> knots_;  // distinct responses, ascending
  std::vector<double> cum_;    // normalized cumulative weight at each knot
  std::vector<double> tail_;   // normalized weight strictly above each knot
  std::vector<double> atom_r_, atom_w_;  // raw atoms, normalized weights
  double q_l_ = 1.0;
  std::size_t n_atoms_ = 0;
};

ResponseDistribution response_cdf(const WeightedResponseSample& sample, double hours);

/// Cells map to response distributions evaluated at the cell midpoint;
/// null entries are allowed only where the cell mass is zero.
class StormMaxDistribution {
 public:
  StormMaxDistribution(const condext::JointDensityGrid& density,
                       std::vector<const ResponseDistribution*> responses);

  double cdf(double r) const;
  double survival(double r) const;
  double total_mass() const { return total_mass_; }
  /// Sorted distinct atoms of all contributing cells.
  const std::vector<double>& support() const { return support_; }

 private:
  std::vector<double> mass_;
  std::vector<const ResponseDistribution*> responses_;
  double total_mass_ = 0.0;
  std::vector<double> support_;
};

double annual_max_cdf(double f_rs, double lambda);
/// Smallest support point r with F_RA(r) >= 1 - 1/P.
double return_value(const StormMaxDistribution& storm, double lambda, double period);

/// Piecewise-linear, non-decreasing map from response to failure probability.
/// At a repeated knot abscissa the first ordinate applies, so a vertical step
/// at r* reads as the lower value at r* itself.
class FragilityCurve {
 public:
  FragilityCurve(std::vector<double> r, std::vector<double> p);
  static FragilityCurve step(double r_star);
  static FragilityCurve constant(double p);

  double operator()(double r) const;

 private:
  std::vector<double> r_, p_;
};

double failure_probability(const FragilityCurve& fragility, const ResponseDistribution& dist);

struct CdeGrid {
  condext::GridEdges edges;
  std::vector<double> value;
  double r_p = 0.0;
  double denominator = 0.0;
  double normalization_residual = 0.0;  // sum(value * area) - 1

  double integral() const;
};

/// Bayes' rule on the grid with a per-cell likelihood f(r_P | x).
CdeGrid cde_from_likelihood(const condext::JointDensityGrid& density,
                            std::span<const double> likelihood, double r_p);

/// CDE with kernel-smoothed response densities; per-cell bandwidth is the
/// default rule times `bandwidth_multiplier`.
CdeGrid cde(const condext::JointDensityGrid& density,
            std::span<const ResponseDistribution* const> responses, double r_p,
            double bandwidth_multiplier = 1.0);

struct ExceedanceMap {
  condext::GridEdges edges;
  std::vector<double> log_survival;  // NaN where a cell has no response model
  double r_p = 0.0;
};

ExceedanceMap exceedance_map(std::span<const ResponseDistribution* const> responses, double r_p,
                             const condext::GridEdges& edges);

/// Per s2 column, the hs at which the log exceedance probability first rises
/// above `threshold`, interpolated between row midpoints through the largest
/// simulated response of each cell. NaN where the column never crosses.
std::vector<double> exceedance_frontier(const ExceedanceMap& map,
                                        std::span<const ResponseDistribution* const> responses,
                                        double threshold = -30.0);

std::string format_cde(const CdeGrid& grid);
std::string format_exceedance_map(const ExceedanceMap& map);

}  // namespace fcde::response
