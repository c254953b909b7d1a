#include "fcde/response.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "fcde/csv.hpp"
#include "fcde/data.hpp"
#include "fcde/errors.hpp"
#include "fcde/parallel.hpp"
#include "fcde/rng.hpp"
#include "fcde/stats.hpp"

namespace fcde::response {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const CoefficientBand& band_at(const std::vector<CoefficientBand>& bands, double z) {
  for (const auto& b : bands)
    if (z <= b.z_hi) return b;
  return bands.back();
}

std::vector<std::size_t> window_indices(std::span<const double> t, double t2) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < t.size(); ++j)
    if (t[j] >= -0.5 * t2 && t[j] <= 0.5 * t2) idx.push_back(j);
  return idx;
}

}  // namespace

double StructureSpec::volume_per_length() const {
  return std::numbers::pi * diameter * diameter / 4.0;
}
double StructureSpec::area_per_length() const { return diameter; }
double StructureSpec::cd_at(double z) const { return band_at(bands, z).cd; }
double StructureSpec::cm_at(double z) const { return band_at(bands, z).cm; }

StructureSpec StructureSpec::scaled(double factor) const {
  StructureSpec s = *this;
  for (auto& b : s.bands) {
    b.cd *= factor;
    b.cm *= factor;
  }
  return s;
}

void StructureSpec::validate() const {
  if (!(depth > 0.0) || !(diameter > 0.0) || !(height > 0.0))
    throw std::invalid_argument("structure: depth, diameter and height must be > 0");
  if (bands.empty()) throw std::invalid_argument("structure: no coefficient bands");
  const double tol = 1e-9 * std::max(1.0, height);
  if (std::abs(bands.front().z_lo + depth) > tol)
    throw std::invalid_argument("structure: coefficient bands must start at the seabed");
  if (std::abs(bands.back().z_hi - top()) > tol)
    throw std::invalid_argument("structure: coefficient bands must end at the structure top");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const auto& b = bands[i];
    if (!(b.z_hi > b.z_lo)) throw std::invalid_argument("structure: empty coefficient band");
    if (!(b.cd > 0.0) || !(b.cm > 0.0))
      throw std::invalid_argument("structure: coefficients must be > 0");
    if (i > 0 && std::abs(b.z_lo - bands[i - 1].z_hi) > tol)
      throw std::invalid_argument("structure: coefficient bands overlap or leave a gap");
  }
}

StructureSpec parse_structure(std::istream& in, std::string name) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  // Two header-led blocks: geometry, then coefficient bands.
  std::istringstream lines(text);
  std::string line, geometry, bands;
  bool in_bands = false;
  while (std::getline(lines, line)) {
    if (line.rfind("z_lo", 0) == 0) in_bands = true;
    (in_bands ? bands : geometry) += line + "\n";
  }
  if (bands.empty()) throw DataError("structure file: missing z_lo,z_hi,cd,cm block");
  std::istringstream gin(geometry), bin(bands);
  const auto g = csv::read(gin);
  if (g.rows.size() != 1) throw DataError("structure file: expected one geometry row");
  StructureSpec s;
  s.name = std::move(name);
  s.depth = csv::to_double(g.rows[0][g.column("depth")], g.lines[0]);
  s.diameter = csv::to_double(g.rows[0][g.column("diameter")], g.lines[0]);
  s.height = csv::to_double(g.rows[0][g.column("height")], g.lines[0]);
  const auto b = csv::read(bin);
  for (std::size_t i = 0; i < b.rows.size(); ++i) {
    const auto& r = b.rows[i];
    const auto ln = b.lines[i];
    s.bands.push_back({csv::to_double(r[b.column("z_lo")], ln),
                       csv::to_double(r[b.column("z_hi")], ln),
                       csv::to_double(r[b.column("cd")], ln),
                       csv::to_double(r[b.column("cm")], ln)});
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return s;
}

StructureSpec load_structure(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open structure file '{}'", path.string()));
  return parse_structure(in, path.stem().string());
}

std::string format_structure(const StructureSpec& s) {
  std::string out = fmt::format("depth,diameter,height\n{},{},{}\nz_lo,z_hi,cd,cm\n", s.depth,
                                s.diameter, s.height);
  for (const auto& b : s.bands) out += fmt::format("{},{},{},{}\n", b.z_lo, b.z_hi, b.cd, b.cm);
  return out;
}

StructureSpec reference_structure(char which) {
  StructureSpec s;
  s.name = std::string(1, which);
  auto three = [&](double lo, double hi) {
    s.bands = {{-100.0, lo, 1.0, 1.0}, {lo, hi, 100.0, 100.0}, {hi, 50.0, 1.0, 1.0}};
  };
  switch (which) {
    case 'A':
      s.bands = {{-100.0, 50.0, 1.0, 1.0}};
      break;
    case 'B':
      three(5.0, 15.0);
      break;
    case 'C':
      three(-95.0, -85.0);
      break;
    default:
      throw std::invalid_argument(fmt::format("unknown reference structure '{}'", which));
  }
  s.validate();
  return s;
}

void check_compatible(const waves::WaveField& field, const StructureSpec& structure) {
  if (std::abs(field.depth - structure.depth) > 1e-9 * structure.depth)
    throw std::invalid_argument("grid/extent mismatch: wave depth differs from structure depth");
  if (field.levels.empty() || field.levels.front() > -structure.depth + 1e-9)
    throw std::invalid_argument("grid/extent mismatch: kinematics do not reach the seabed");
  if (field.z.empty() || field.z.back() < structure.top() - 1e-9)
    throw std::invalid_argument("grid/extent mismatch: z grid below the structure top");
}

double base_shear_at(const waves::WaveField& field, const StructureSpec& s, std::size_t it) {
  const double zb = -s.depth;
  const double top = std::min(field.eta[it], s.top());
  if (!(top > zb)) return 0.0;

  const auto& lv = field.levels;
  const std::size_t nl = lv.size();
  const double* u = &field.u_level[it * nl];
  const double* ud = &field.udot_level[it * nl];

  std::vector<double> zs;
  zs.reserve(nl + s.bands.size() + 2);
  zs.push_back(zb);
  zs.push_back(top);
  for (double l : lv)
    if (l > zb && l < top) zs.push_back(l);
  for (const auto& b : s.bands)
    if (b.z_hi > zb && b.z_hi < top) zs.push_back(b.z_hi);
  std::sort(zs.begin(), zs.end());
  zs.erase(std::unique(zs.begin(), zs.end()), zs.end());

  auto kinematics = [&](double z, double& uz, double& udz) {
    const double zp = std::min(z, 0.0);
    auto hi = static_cast<std::size_t>(std::upper_bound(lv.begin(), lv.end(), zp) - lv.begin());
    if (hi == 0) hi = 1;
    if (hi >= nl) {
      uz = u[nl - 1];
      udz = ud[nl - 1];
      return;
    }
    const std::size_t lo = hi - 1;
    const double f = (zp - lv[lo]) / (lv[hi] - lv[lo]);
    uz = u[lo] + f * (u[hi] - u[lo]);
    udz = ud[lo] + f * (ud[hi] - ud[lo]);
  };

  const double rho = kWaterDensity;
  const double V = s.volume_per_length();
  const double A = s.area_per_length();
  double total = 0.0;
  double ua, uda;
  kinematics(zs[0], ua, uda);
  for (std::size_t i = 1; i < zs.size(); ++i) {
    double ub, udb;
    kinematics(zs[i], ub, udb);
    const auto& band = band_at(s.bands, 0.5 * (zs[i - 1] + zs[i]));
    const double ma = rho * band.cm * V * uda + 0.5 * rho * band.cd * A * ua * std::abs(ua);
    const double mb = rho * band.cm * V * udb + 0.5 * rho * band.cd * A * ub * std::abs(ub);
    total += 0.5 * (ma + mb) * (zs[i] - zs[i - 1]);
    ua = ub;
    uda = udb;
  }
  return total;
}

std::vector<double> morison_base_shear(const waves::WaveField& field,
                                       const StructureSpec& structure) {
  check_compatible(field, structure);
  std::vector<double> out(field.n_t());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = base_shear_at(field, structure, j);
  return out;
}

double max_response_single_wave(std::span<const double> series, std::span<const double> t,
                                double t2) {
  if (series.size() != t.size()) throw std::invalid_argument("series and time grid differ");
  const auto idx = window_indices(t, t2);
  if (idx.empty()) throw std::invalid_argument("empty central-wave window");
  double m = -std::numeric_limits<double>::infinity();
  for (auto j : idx) m = std::max(m, series[j]);
  return m;
}

double SeaState::t2() const { return data::period_from_steepness(hs, s2); }

double rayleigh_crest_density(double c, double hs) {
  if (c < 0.0) return 0.0;
  return 16.0 * c / (hs * hs) * std::exp(-8.0 * c * c / (hs * hs));
}

double waves_per_sea_state(double hours, double t2) { return 3600.0 * hours / t2; }

std::vector<std::vector<double>> simulate_responses(SeaState x,
                                                    std::span<const StructureSpec> structures,
                                                    std::span<const double> crests,
                                                    std::uint64_t seed,
                                                    const ResponseSimOptions& options) {
  const auto omega = waves::frequency_grid(options.grid.window, options.grid.n_t);
  const auto spectrum = waves::jonswap_spectrum(x.hs, x.s2, omega, options.jonswap);
  const waves::WaveSimulator sim(spectrum, options.grid);
  const auto window = window_indices(options.grid.t(), spectrum.t2);
  if (window.empty()) throw std::invalid_argument("empty central-wave window");

  std::vector<std::vector<double>> out(structures.size(), std::vector<double>(crests.size()));
  parallel_for(
      crests.size(),
      [&](std::size_t i) {
        const auto field = sim.simulate(crests[i], derive_seed(seed, i + 1));
        for (std::size_t s = 0; s < structures.size(); ++s) {
          if (i == 0) check_compatible(field, structures[s]);
          double m = -std::numeric_limits<double>::infinity();
          for (auto j : window) m = std::max(m, base_shear_at(field, structures[s], j));
          out[s][i] = m;
        }
      },
      options.threads);
  return out;
}

std::vector<WeightedResponseSample> simulate_response_samples(
    SeaState x, std::span<const StructureSpec> structures, std::size_t k, double epsilon,
    std::uint64_t seed, const ResponseSimOptions& options) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  Rng rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> unif(0.0, epsilon * x.hs);
  std::vector<double> crests(k);
  for (auto& c : crests) c = unif(rng);
  const auto responses = simulate_responses(x, structures, crests, seed, options);
  std::vector<WeightedResponseSample> out(structures.size());
  for (std::size_t s = 0; s < structures.size(); ++s) {
    out[s].epsilon = epsilon;
    out[s].seastate = x;
    out[s].entries.resize(k);
    for (std::size_t i = 0; i < k; ++i)
      out[s].entries[i] = {crests[i], responses[s][i],
                           rayleigh_crest_density(crests[i], x.hs) * epsilon * x.hs};
  }
  return out;
}

WeightedResponseSample simulate_response_sample(SeaState x, const StructureSpec& structure,
                                                std::size_t k, double epsilon, std::uint64_t seed,
                                                const ResponseSimOptions& options) {
  return std::move(simulate_response_samples(x, std::span(&structure, 1), k, epsilon, seed,
                                             options)
                       .front());
}

ResponseDistribution::ResponseDistribution(std::span<const double> responses,
                                           std::span<const double> weights, double q_l)
    : q_l_(q_l) {
  if (responses.size() != weights.size() || responses.empty())
    throw std::invalid_argument("response distribution: atoms and weights differ or are empty");
  if (!(q_l > 0.0)) throw std::invalid_argument("response distribution: Q_L must be > 0");
  std::vector<std::pair<double, double>> atoms;
  double total = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(responses[i]))
      throw std::invalid_argument("response distribution: invalid atom");
    atoms.emplace_back(responses[i], weights[i]);
    total += weights[i];
  }
  if (!(total > 0.0)) throw DataError("all importance weights are zero");
  std::sort(atoms.begin(), atoms.end());
  n_atoms_ = atoms.size();
  for (const auto& [r, w] : atoms) {
    atom_r_.push_back(r);
    atom_w_.push_back(w / total);
  }
  // Cumulative from the top keeps upper-tail mass exact.
  std::vector<double> tail_at(atoms.size());
  double tail = 0.0;
  for (std::size_t i = atoms.size(); i-- > 0;) {
    tail_at[i] = tail;  // weight strictly above atom i (ties resolved below)
    tail += atom_w_[i];
  }
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (!knots_.empty() && atom_r_[i] == knots_.back()) {
      cum_.back() = 1.0 - tail_at[i];
      continue;
    }
    knots_.push_back(atom_r_[i]);
    cum_.push_back(1.0 - tail_at[i]);
  }
  tail_.resize(knots_.size());
  for (std::size_t i = 0, a = 0; i < knots_.size(); ++i) {
    while (a < atom_r_.size() && atom_r_[a] <= knots_[i]) ++a;
    tail_[i] = a < atom_r_.size() ? tail_at[a - 1] : 0.0;
  }
}

double ResponseDistribution::tail_single(double r) const {
  const auto i = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), r) -
                                          knots_.begin());
  return i == 0 ? 1.0 : tail_[i - 1];
}

double ResponseDistribution::cdf_single(double r) const {
  const auto i = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), r) -
                                          knots_.begin());
  return i == 0 ? 0.0 : cum_[i - 1];
}

double ResponseDistribution::survival(double r) const {
  const double tail = tail_single(r);
  if (tail >= 1.0) return 1.0;
  return -std::expm1(q_l_ * std::log1p(-tail));
}

double ResponseDistribution::cdf(double r) const {
  const double tail = tail_single(r);
  if (tail >= 1.0) return 0.0;
  return std::exp(q_l_ * std::log1p(-tail));
}

double ResponseDistribution::log_survival(double r) const {
  const double s = survival(r);
  return s > 0.0 ? std::log(s) : -std::numeric_limits<double>::infinity();
}

double ResponseDistribution::default_bandwidth() const {
  double m = 0.0;
  for (std::size_t i = 0; i < atom_r_.size(); ++i) m += atom_w_[i] * atom_r_[i];
  double v = 0.0;
  for (std::size_t i = 0; i < atom_r_.size(); ++i)
    v += atom_w_[i] * (atom_r_[i] - m) * (atom_r_[i] - m);
  const double sd = std::sqrt(v);
  const double h = 1.06 * sd * std::pow(static_cast<double>(n_atoms_), -0.2);
  return h > 0.0 ? h : 1e-9 * std::max(1.0, std::abs(m));
}

double ResponseDistribution::smoothed_cdf_single(double r, double h) const {
  double tail = 0.0;
  for (std::size_t i = 0; i < atom_r_.size(); ++i)
    tail += atom_w_[i] * 0.5 * std::erfc((r - atom_r_[i]) / (h * std::numbers::sqrt2));
  return 1.0 - tail;
}

double ResponseDistribution::smoothed_density_single(double r, double h) const {
  double d = 0.0;
  for (std::size_t i = 0; i < atom_r_.size(); ++i) {
    const double z = (r - atom_r_[i]) / h;
    d += atom_w_[i] * std::exp(-0.5 * z * z);
  }
  return d / (h * std::sqrt(2.0 * std::numbers::pi));
}

double ResponseDistribution::density(double r, double h) const {
  double tail = 0.0, d = 0.0;
  for (std::size_t i = 0; i < atom_r_.size(); ++i) {
    const double z = (r - atom_r_[i]) / h;
    tail += atom_w_[i] * 0.5 * std::erfc(z / std::numbers::sqrt2);
    d += atom_w_[i] * std::exp(-0.5 * z * z);
  }
  d /= h * std::sqrt(2.0 * std::numbers::pi);
  if (d <= 0.0 || tail >= 1.0) return 0.0;
  return q_l_ * std::exp((q_l_ - 1.0) * std::log1p(-tail)) * d;
}

ResponseDistribution response_cdf(const WeightedResponseSample& sample, double hours) {
  if (!(hours > 0.0)) throw std::invalid_argument("sea-state duration must be > 0");
  std::vector<double> r, w;
  for (const auto& e : sample.entries) {
    r.push_back(e.response);
    w.push_back(e.weight);
  }
  return ResponseDistribution(r, w, waves_per_sea_state(hours, sample.seastate.t2()));
}

StormMaxDistribution::StormMaxDistribution(const condext::JointDensityGrid& density,
                                           std::vector<const ResponseDistribution*> responses)
    : mass_(density.mass), responses_(std::move(responses)) {
  if (responses_.size() != mass_.size())
    throw std::invalid_argument("storm maximum: one response distribution per cell required");
  for (std::size_t c = 0; c < mass_.size(); ++c) {
    if (mass_[c] <= 0.0) continue;
    if (!responses_[c])
      throw DataError(fmt::format("cell {} has positive mass but no response distribution", c));
    total_mass_ += mass_[c];
    const auto& k = responses_[c]->knots();
    support_.insert(support_.end(), k.begin(), k.end());
  }
  std::sort(support_.begin(), support_.end());
  support_.erase(std::unique(support_.begin(), support_.end()), support_.end());
}

double StormMaxDistribution::cdf(double r) const {
  double f = 0.0;
  for (std::size_t c = 0; c < mass_.size(); ++c)
    if (mass_[c] > 0.0) f += mass_[c] * responses_[c]->cdf(r);
  return f;
}

double StormMaxDistribution::survival(double r) const {
  double s = 1.0 - total_mass_;
  for (std::size_t c = 0; c < mass_.size(); ++c)
    if (mass_[c] > 0.0) s += mass_[c] * responses_[c]->survival(r);
  return std::max(s, 0.0);
}

double annual_max_cdf(double f_rs, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  return std::exp(-lambda * (1.0 - f_rs));
}

double return_value(const StormMaxDistribution& storm, double lambda, double period) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (!(period > 1.0)) throw std::invalid_argument("return period must be > 1");
  const auto& s = storm.support();
  if (s.empty()) throw NumericalError("storm maximum distribution has no support");
  const double target = -std::log1p(-1.0 / period) / lambda;  // required 1 - F_RS
  if (storm.survival(s.back()) > target)
    throw NumericalError(
        fmt::format("annual non-exceedance 1 - 1/{} outside the attainable range", period));
  std::size_t lo = 0, hi = s.size() - 1;
  if (storm.survival(s[lo]) <= target) return s[lo];
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (storm.survival(s[mid]) <= target ? hi : lo) = mid;
  }
  return s[hi];
}

FragilityCurve::FragilityCurve(std::vector<double> r, std::vector<double> p)
    : r_(std::move(r)), p_(std::move(p)) {
  if (r_.empty() || r_.size() != p_.size())
    throw std::invalid_argument("fragility: need matching, non-empty knots");
  for (std::size_t i = 0; i < r_.size(); ++i) {
    if (!(p_[i] >= 0.0 && p_[i] <= 1.0))
      throw std::invalid_argument("fragility: probabilities must lie in [0,1]");
    if (i > 0 && (r_[i] < r_[i - 1] || p_[i] < p_[i - 1]))
      throw std::invalid_argument("fragility: knots must be non-decreasing");
  }
}

FragilityCurve FragilityCurve::step(double r_star) { return FragilityCurve({r_star, r_star}, {0.0, 1.0}); }

FragilityCurve FragilityCurve::constant(double p) { return FragilityCurve({0.0}, {p}); }

double FragilityCurve::operator()(double r) const {
  const auto i = static_cast<std::size_t>(std::lower_bound(r_.begin(), r_.end(), r) - r_.begin());
  if (i == r_.size()) return p_.back();
  if (r_[i] == r || i == 0) return p_[i];
  const double f = (r - r_[i - 1]) / (r_[i] - r_[i - 1]);
  return p_[i - 1] + f * (p_[i] - p_[i - 1]);
}

double failure_probability(const FragilityCurve& fragility, const ResponseDistribution& dist) {
  double total = 0.0;
  double previous = 0.0;
  for (double r : dist.knots()) {
    const double f = dist.cdf(r);
    total += (f - previous) * fragility(r);
    previous = f;
  }
  return total;
}

double CdeGrid::integral() const {
  double s = 0.0;
  for (std::size_t c = 0; c < value.size(); ++c) s += value[c] * edges.area(c);
  return s;
}

CdeGrid cde_from_likelihood(const condext::JointDensityGrid& density,
                            std::span<const double> likelihood, double r_p) {
  const std::size_t n = density.edges.cells();
  if (likelihood.size() != n) throw std::invalid_argument("cde: one likelihood per cell required");
  CdeGrid g;
  g.edges = density.edges;
  g.r_p = r_p;
  g.value.assign(n, 0.0);
  double denom = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    if (density.mass[c] <= 0.0) continue;
    g.value[c] = likelihood[c] * density.density[c];
    denom += g.value[c] * density.edges.area(c);
  }
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw NumericalError("cde: zero normalizing constant (r_P outside all cell supports)");
  for (auto& v : g.value) v /= denom;
  g.denominator = denom;
  g.normalization_residual = g.integral() - 1.0;
  return g;
}

CdeGrid cde(const condext::JointDensityGrid& density,
            std::span<const ResponseDistribution* const> responses, double r_p,
            double bandwidth_multiplier) {
  const std::size_t n = density.edges.cells();
  if (responses.size() != n) throw std::invalid_argument("cde: one response per cell required");
  if (!(bandwidth_multiplier > 0.0)) throw std::invalid_argument("cde: bandwidth must be > 0");
  std::vector<double> like(n, 0.0);
  parallel_for(n, [&](std::size_t c) {
    if (density.mass[c] <= 0.0) return;
    if (!responses[c])
      throw DataError(fmt::format("cell {} has positive mass but no response distribution", c));
    const auto* d = responses[c];
    like[c] = d->density(r_p, bandwidth_multiplier * d->default_bandwidth());
  });
  return cde_from_likelihood(density, like, r_p);
}

ExceedanceMap exceedance_map(std::span<const ResponseDistribution* const> responses, double r_p,
                             const condext::GridEdges& edges) {
  if (responses.size() != edges.cells())
    throw std::invalid_argument("exceedance map: one response per cell required");
  ExceedanceMap m;
  m.edges = edges;
  m.r_p = r_p;
  m.log_survival.resize(edges.cells());
  for (std::size_t c = 0; c < edges.cells(); ++c) {
    if (!responses[c]) {
      m.log_survival[c] = kNaN;
      continue;
    }
    const double ls = responses[c]->log_survival(r_p);
    m.log_survival[c] = std::isfinite(ls) ? std::max(ls, kLogZero) : kLogZero;
  }
  return m;
}

std::vector<double> exceedance_frontier(const ExceedanceMap& map,
                                        std::span<const ResponseDistribution* const> responses,
                                        double threshold) {
  const auto& e = map.edges;
  std::vector<double> out(e.n_s2(), kNaN);
  for (std::size_t j = 0; j < e.n_s2(); ++j) {
    for (std::size_t i = 0; i < e.n_hs(); ++i) {
      const std::size_t c = e.index(i, j);
      const double ls = map.log_survival[c];
      if (std::isnan(ls) || !(ls > threshold)) continue;
      const double h_hi = e.midpoint(c).hs;
      out[j] = h_hi;
      if (i > 0) {
        const std::size_t below = e.index(i - 1, j);
        if (responses[below] && responses[c]) {
          const double r_lo = responses[below]->max_knot();
          const double r_hi = responses[c]->max_knot();
          const double h_lo = e.midpoint(below).hs;
          if (r_hi > r_lo) {
            const double f = std::clamp((map.r_p - r_lo) / (r_hi - r_lo), 0.0, 1.0);
            out[j] = h_lo + f * (h_hi - h_lo);
          }
        }
      }
      break;
    }
  }
  return out;
}

std::string format_cde(const CdeGrid& grid) {
  std::string out = "hs_lo,hs_hi,s2_lo,s2_hi,value\n";
  for (std::size_t c = 0; c < grid.edges.cells(); ++c) {
    const auto lo = grid.edges.lower(c), hi = grid.edges.upper(c);
    out += fmt::format("{},{},{},{},{}\n", lo.hs, hi.hs, lo.s2, hi.s2, grid.value[c]);
  }
  return out;
}

std::string format_exceedance_map(const ExceedanceMap& map) {
  std::string out = "hs_lo,hs_hi,s2_lo,s2_hi,log_survival\n";
  for (std::size_t c = 0; c < map.edges.cells(); ++c) {
    const auto lo = map.edges.lower(c), hi = map.edges.upper(c);
    const double v = map.log_survival[c];
    out += fmt::format("{},{},{},{},{}\n", lo.hs, hi.hs, lo.s2, hi.s2,
                       std::isnan(v) ? std::string() : fmt::format("{}", v));
  }
  return out;
}

}  // namespace fcde::response
