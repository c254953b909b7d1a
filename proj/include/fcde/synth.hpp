#pragma once

#include <cstdint>
#include <string>

#include "fcde/data.hpp"

namespace fcde::synth {

enum class Dependence { Lognormal, ConditionalExtremes };

std::string to_string(Dependence d);
Dependence dependence_from_string(const std::string& s);

/// Generator of a synthetic 3-hourly hindcast with known storm-peak laws.
///
/// Storm peaks arrive as a Poisson count over the record; each storm is a
/// triangular H_S ramp of `half_width` sea states either side of its peak over
/// an i.i.d. calm background, with constant steepness through the storm.
/// Peak H_S = hs_base + GPD(gpd_sigma, gpd_xi).
///
/// Lognormal dependence: log S2 | hs ~ N(s2_mu0 + s2_mu1 hs, s2_sigma^2).
/// Conditional-extremes dependence: on Laplace margins Y2 = alpha Y1 +
/// Y1^beta Z, Z ~ N(z_mu, z_sd^2), for Y1 > 0 and Y2 independent Laplace
/// otherwise; S2 has a lognormal margin exp(s2_mu0 + s2_sigma N(0, 1)).
struct SynthConfig {
  double years = 35.0;
  double rate = 73.0;  // storms per year
  double cadence_hours = 3.0;
  int half_width = 8;
  int min_separation = 6;  // calm states between storms
  double hs_base = 2.0;
  double gpd_sigma = 1.0;
  double gpd_xi = -0.05;
  double background_lo = 0.5;
  double background_hi = 1.2;
  double background_s2 = 0.02;
  Dependence dependence = Dependence::Lognormal;
  double s2_mu0 = -3.75;
  double s2_mu1 = 0.04;
  double s2_sigma = 0.12;
  double ht_alpha = 0.378;
  double ht_beta = 0.533;
  double z_mu = 0.0;
  double z_sd = 0.5;
  std::int64_t start_time = 946684800;  // 2000-01-01T00:00:00Z

  void validate() const;
};

struct SynthResult {
  data::HindcastSeries series;
  std::vector<data::StormPeak> peaks;  // generated storm peaks in time order
};

SynthResult generate(const SynthConfig& cfg, std::uint64_t seed);

/// JSON sidecar with the generator parameters, seed and storm count.
std::string truth_json(const SynthConfig& cfg, std::uint64_t seed, const SynthResult& result);

}  // namespace fcde::synth
