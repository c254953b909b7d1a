#include "fcde/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fcde/errors.hpp"
#include "fcde/marginal.hpp"
#include "fcde/rng.hpp"
#include "fcde/stats.hpp"

namespace fcde::synth {

std::string to_string(Dependence d) {
  return d == Dependence::Lognormal ? "lognormal" : "ht";
}

Dependence dependence_from_string(const std::string& s) {
  if (s == "lognormal") return Dependence::Lognormal;
  if (s == "ht") return Dependence::ConditionalExtremes;
  throw ConfigError(fmt::format("synth.dependence: expected lognormal or ht, got '{}'", s));
}

void SynthConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(fmt::format("synth: {}", what));
  };
  need(years > 0.0, "years must be positive");
  need(rate > 0.0, "rate must be positive");
  need(cadence_hours > 0.0, "cadence_hours must be positive");
  need(half_width >= 1, "half_width must be >= 1");
  need(min_separation >= 1, "min_separation must be >= 1");
  need(gpd_sigma > 0.0, "gpd_sigma must be positive");
  need(gpd_xi > -1.0 && gpd_xi < 1.0, "gpd_xi must lie in (-1, 1)");
  need(background_lo > 0.0 && background_hi > background_lo, "background range is empty");
  need(hs_base > background_hi, "hs_base must exceed the calm background");
  need(background_s2 > 0.0, "background_s2 must be positive");
  need(s2_sigma > 0.0, "s2_sigma must be positive");
  need(ht_alpha >= -1.0 && ht_alpha <= 1.0, "ht_alpha must lie in [-1, 1]");
  need(ht_beta < 1.0, "ht_beta must be < 1");
  need(z_sd > 0.0, "z_sd must be positive");
}

SynthResult generate(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const double cadence = cfg.cadence_hours * 3600.0;
  const auto n_states = static_cast<std::size_t>(cfg.years * data::kSecondsPerYear / cadence);
  const auto w = static_cast<std::size_t>(cfg.half_width);
  const std::size_t spacing = 2 * w + 1 + static_cast<std::size_t>(cfg.min_separation);

  Rng count_rng = make_rng(seed, 0);
  const auto n_storms =
      static_cast<std::size_t>(std::poisson_distribution<long>(cfg.rate * cfg.years)(count_rng));
  if (n_states < 2 * w + 1 || n_storms * spacing + 2 * w + 1 > n_states)
    throw ConfigError(fmt::format("synth: {} storms of {} states do not fit in {} sea states",
                                  n_storms, spacing, n_states));

  // Sorted uniform offsets in the free slack, then shifted apart by the spacing.
  Rng place_rng = make_rng(seed, 1);
  const std::size_t slack = n_states - 2 * w - 1 - (n_storms == 0 ? 0 : (n_storms - 1) * spacing);
  std::uniform_int_distribution<std::size_t> slot(0, slack - 1);
  std::vector<std::size_t> centre(n_storms);
  for (auto& c : centre) c = slot(place_rng);
  std::sort(centre.begin(), centre.end());
  for (std::size_t i = 0; i < n_storms; ++i) centre[i] += i * spacing + w;

  SynthResult out;
  out.series.cadence = cadence;
  out.series.records.resize(n_states);
  std::vector<double> s2(n_states);
  Rng bg_rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> bg(cfg.background_lo, cfg.background_hi);
  std::normal_distribution<double> noise;
  for (std::size_t i = 0; i < n_states; ++i) {
    out.series.records[i].time =
        cfg.start_time + static_cast<std::int64_t>(std::llround(static_cast<double>(i) * cadence));
    out.series.records[i].hs = bg(bg_rng);
    s2[i] = cfg.background_s2 * std::exp(0.15 * noise(bg_rng));
  }

  Rng peak_rng = make_rng(seed, 3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n_storms; ++i) {
    const double q = 1.0 - unif(peak_rng);  // (0, 1]
    const double hs = cfg.hs_base + marginal::gpd_quantile_upper(q, cfg.gpd_sigma, cfg.gpd_xi);
    double s2_peak = 0.0;
    if (cfg.dependence == Dependence::Lognormal) {
      s2_peak = std::exp(cfg.s2_mu0 + cfg.s2_mu1 * hs + cfg.s2_sigma * noise(peak_rng));
    } else {
      // Y1 is exactly standard Laplace because q is the GPD upper-tail probability of hs.
      const double y1 = q < 0.5 ? -std::log(2.0 * q) : std::log(2.0 * (1.0 - q));
      double y2;
      if (y1 > 0.0) {
        y2 = cfg.ht_alpha * y1 + std::pow(y1, cfg.ht_beta) * (cfg.z_mu + cfg.z_sd * noise(peak_rng));
      } else {
        y2 = stats::laplace_quantile(std::clamp(unif(peak_rng), 1e-300, 1.0 - 1e-16));
      }
      const double u = stats::laplace_cdf(y2);
      const double z = y2 > 0.0 ? -stats::normal_quantile(0.5 * std::exp(-y2))
                                : stats::normal_quantile(u);
      s2_peak = std::exp(cfg.s2_mu0 + cfg.s2_sigma * z);
    }
    out.peaks.push_back({hs, s2_peak});
    for (std::size_t j = centre[i] - w; j <= centre[i] + w; ++j) {
      const double dist = std::abs(static_cast<double>(j) - static_cast<double>(centre[i]));
      auto& rec = out.series.records[j];
      rec.hs = rec.hs + (hs - rec.hs) * (1.0 - dist / static_cast<double>(w + 1));
      s2[j] = s2_peak;
    }
  }
  for (std::size_t i = 0; i < n_states; ++i)
    out.series.records[i].t2 = data::period_from_steepness(out.series.records[i].hs, s2[i]);
  return out;
}

std::string truth_json(const SynthConfig& cfg, std::uint64_t seed, const SynthResult& result) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["n_storms"] = result.peaks.size();
  j["n_states"] = result.series.size();
  j["years"] = cfg.years;
  j["rate"] = cfg.rate;
  j["cadence_hours"] = cfg.cadence_hours;
  j["half_width"] = cfg.half_width;
  j["min_separation"] = cfg.min_separation;
  j["hs_peak"] = {{"base", cfg.hs_base}, {"gpd_sigma", cfg.gpd_sigma}, {"gpd_xi", cfg.gpd_xi}};
  j["background"] = {{"hs_lo", cfg.background_lo},
                     {"hs_hi", cfg.background_hi},
                     {"s2", cfg.background_s2}};
  j["dependence"] = to_string(cfg.dependence);
  if (cfg.dependence == Dependence::Lognormal) {
    j["s2_given_hs"] = {{"family", "lognormal"},
                        {"mu_L", {cfg.s2_mu0, cfg.s2_mu1}},
                        {"sigma_L", cfg.s2_sigma}};
  } else {
    j["s2_margin"] = {{"family", "lognormal"}, {"mu_L", cfg.s2_mu0}, {"sigma_L", cfg.s2_sigma}};
    j["ht"] = {{"alpha", cfg.ht_alpha}, {"beta", cfg.ht_beta}, {"z_mu", cfg.z_mu},
               {"z_sd", cfg.z_sd}};
  }
  return j.dump(2) + "\n";
}

}  // namespace fcde::synth
