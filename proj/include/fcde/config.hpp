#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcde/contours.hpp"
#include "fcde/data.hpp"
#include "fcde/marginal.hpp"
#include "fcde/synth.hpp"
#include "fcde/waves.hpp"

namespace fcde::config {

/// Run configuration read from an INI file. Every key is optional and has a
/// default; unknown sections or keys are rejected. Relative paths resolve
/// against the directory of the config file.
struct RunConfig {
  std::filesystem::path base_dir = ".";

  // [paths]
  std::filesystem::path input = "hindcast.csv";
  std::filesystem::path workdir = "work";
  std::vector<std::filesystem::path> structures;  // empty: reference A, B, C

  // [seeds]
  std::uint64_t master_seed = 20240607;

  // [synth]
  bool synth_enabled = false;
  synth::SynthConfig synth;

  // [peaks]
  data::PeakExtractionConfig peaks;

  // [marginal]
  double hs_threshold = 0.8;
  double s2_threshold = 0.8;
  marginal::BodyCdf body = marginal::BodyCdf::Interpolated;
  std::vector<double> diagnostic_grid{0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
  int n_boot = 100;

  // [ht]
  double ht_threshold = 0.95;
  double kde_bandwidth_multiplier = 1.0;

  // [simulate]
  std::size_t n_sim = 1000000;
  std::size_t grid_hs = 40;
  std::size_t grid_s2 = 40;

  // [response]
  std::size_t crests = 500;
  double epsilon = 2.0;
  double hours = 3.0;
  waves::JonswapParams jonswap;
  waves::WaveGrid wave_grid;

  // [return]
  std::vector<double> periods{10.0, 100.0, 1000.0, 10000.0};
  double design_period = 1000.0;
  double cde_bandwidth_multiplier = 1.0;
  double frontier_threshold = -30.0;

  // [contour]
  std::size_t contour_points = 360;
  /// Empty: best model per (family, transform) from the zoo, ranked by AS.
  std::vector<contours::ModelSpec> contour_models;
  std::size_t n_contours = 8;
  contours::ScoreSettings score;

  // [cli]
  std::size_t threads = 1;
  std::string log_level = "warn";

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path input_path() const { return resolve(input); }
  std::filesystem::path work_path() const { return resolve(workdir); }

  /// Range checks; throws ConfigError.
  void validate() const;
};

/// Canonical `key = value` text of one section, used for stage hashing.
std::string section_text(const RunConfig& cfg, const std::string& section);

/// The full effective configuration as INI text (all sections, defaults filled).
std::string to_ini(const RunConfig& cfg);

RunConfig parse_config(const std::string& text,
                       const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace fcde::config
