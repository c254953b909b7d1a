#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fcde::data {

inline constexpr double kGravity = 9.81;
inline constexpr double kSecondsPerYear = 365.25 * 86400.0;

struct SeaStateRecord {
  std::int64_t time = 0;  // seconds since epoch
  double hs = 0.0;        // m
  double t2 = 0.0;        // s
};

struct HindcastSeries {
  std::vector<SeaStateRecord> records;
  double cadence = 10800.0;  // median spacing of timestamps, s

  std::size_t size() const { return records.size(); }
};

struct StormPeak {
  double hs = 0.0;
  double s2 = 0.0;
};

struct StormPeakSample {
  std::vector<StormPeak> peaks;
  double n_an = 0.0;  // storm events per year
  double years_spanned = 0.0;

  std::vector<double> hs() const;
  std::vector<double> s2() const;
};

struct PeakExtractionConfig {
  double threshold_quantile = 0.7;
  int min_gap = 4;
  /// Absolute threshold in metres; overrides the quantile when set.
  std::optional<double> threshold_value;

  void validate() const;
};

/// ISO-8601 date-time (YYYY-MM-DD[THH:MM[:SS]][Z]) or integer epoch seconds.
std::int64_t parse_timestamp(std::string_view text);

HindcastSeries parse_hindcast(std::istream& in);
HindcastSeries load_hindcast(const std::filesystem::path& path);
std::string format_hindcast(const HindcastSeries& series);

/// Threshold (m) that extract_storm_peaks would use for this series.
double peak_threshold(const HindcastSeries& series, const PeakExtractionConfig& cfg);

StormPeakSample extract_storm_peaks(const HindcastSeries& series,
                                    const PeakExtractionConfig& cfg = {});

double steepness_from_period(double hs, double t2);
double period_from_steepness(double hs, double s2);

/// `hs,s2` CSV body.
std::string format_storm_peaks(const StormPeakSample& sample);
/// Reads `hs,s2` rows; n_an and years_spanned are left for the caller to fill.
StormPeakSample parse_storm_peaks(std::istream& in);
StormPeakSample load_storm_peaks(const std::filesystem::path& path);

}  // namespace fcde::data
