#include "fcde/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "fcde/csv.hpp"
#include "fcde/errors.hpp"
#include "fcde/stats.hpp"

namespace fcde::data {
namespace {

bool read_int(std::string_view s, std::size_t& pos, std::size_t width, int& out) {
  if (pos + width > s.size()) return false;
  const auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + width, out);
  if (ec != std::errc() || ptr != s.data() + pos + width) return false;
  pos += width;
  return true;
}

bool expect(std::string_view s, std::size_t& pos, char c) {
  if (pos < s.size() && s[pos] == c) {
    ++pos;
    return true;
  }
  return false;
}

}  // namespace

std::vector<double> StormPeakSample::hs() const {
  std::vector<double> v;
  v.reserve(peaks.size());
  for (const auto& p : peaks) v.push_back(p.hs);
  return v;
}

std::vector<double> StormPeakSample::s2() const {
  std::vector<double> v;
  v.reserve(peaks.size());
  for (const auto& p : peaks) v.push_back(p.s2);
  return v;
}

void PeakExtractionConfig::validate() const {
  if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0))
    throw std::invalid_argument("threshold_quantile must lie in (0,1)");
  if (min_gap < 1) throw std::invalid_argument("min_gap must be >= 1");
}

std::int64_t parse_timestamp(std::string_view text) {
  if (text.empty()) throw DataError("empty timestamp");
  if (text.find('-', 1) == std::string_view::npos) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw DataError(fmt::format("cannot parse timestamp '{}'", text));
    return v;
  }
  using namespace std::chrono;
  std::size_t pos = 0;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  bool ok = read_int(text, pos, 4, y) && expect(text, pos, '-') && read_int(text, pos, 2, mo) &&
            expect(text, pos, '-') && read_int(text, pos, 2, d);
  if (ok && pos < text.size()) {
    ok = (expect(text, pos, 'T') || expect(text, pos, ' ')) && read_int(text, pos, 2, h) &&
         expect(text, pos, ':') && read_int(text, pos, 2, mi);
    if (ok && expect(text, pos, ':')) ok = read_int(text, pos, 2, s);
    if (ok && pos < text.size()) ok = expect(text, pos, 'Z') && pos == text.size();
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ok || !ymd.ok() || h > 23 || mi > 59 || s > 60)
    throw DataError(fmt::format("cannot parse timestamp '{}'", text));
  const auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
  return duration_cast<seconds>(tp.time_since_epoch()).count();
}

HindcastSeries parse_hindcast(std::istream& in) {
  const auto table = csv::read(in);
  const auto ct = table.column("time");
  const auto ch = table.column("hs");
  const auto cp = table.column("t2");
  if (table.rows.empty()) throw DataError("no records");
  HindcastSeries series;
  series.records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t line = table.lines[i];
    SeaStateRecord r;
    try {
      r.time = parse_timestamp(row[ct]);
    } catch (const DataError& e) {
      throw DataError(fmt::format("row {} (line {}): {}", i + 1, line, e.what()));
    }
    r.hs = csv::to_double(row[ch], line);
    r.t2 = csv::to_double(row[cp], line);
    if (!(r.hs > 0.0) || !std::isfinite(r.hs))
      throw DataError(fmt::format("row {} (line {}): hs must be > 0", i + 1, line));
    if (!(r.t2 > 0.0) || !std::isfinite(r.t2))
      throw DataError(fmt::format("row {} (line {}): t2 must be > 0", i + 1, line));
    if (!series.records.empty() && r.time <= series.records.back().time)
      throw DataError(fmt::format("row {} (line {}): timestamps not strictly increasing", i + 1,
                                  line));
    series.records.push_back(r);
  }
  if (series.records.size() > 1) {
    std::vector<double> gaps;
    for (std::size_t i = 1; i < series.records.size(); ++i)
      gaps.push_back(static_cast<double>(series.records[i].time - series.records[i - 1].time));
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    series.cadence = gaps[gaps.size() / 2];
  }
  return series;
}

HindcastSeries load_hindcast(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open hindcast '{}'", path.string()));
  return parse_hindcast(in);
}

std::string format_hindcast(const HindcastSeries& series) {
  std::string out = "time,hs,t2\n";
  for (const auto& r : series.records) out += fmt::format("{},{},{}\n", r.time, r.hs, r.t2);
  return out;
}

double peak_threshold(const HindcastSeries& series, const PeakExtractionConfig& cfg) {
  cfg.validate();
  if (cfg.threshold_value) return *cfg.threshold_value;
  std::vector<double> hs;
  hs.reserve(series.size());
  for (const auto& r : series.records) hs.push_back(r.hs);
  return stats::quantile(std::move(hs), cfg.threshold_quantile);
}

StormPeakSample extract_storm_peaks(const HindcastSeries& series,
                                    const PeakExtractionConfig& cfg) {
  if (series.records.empty()) throw DataError("no records");
  const double threshold = peak_threshold(series, cfg);
  const auto& rec = series.records;

  StormPeakSample sample;
  std::size_t best = 0;
  bool in_storm = false;
  std::size_t calm = 0;  // consecutive below-threshold states since the last exceedance
  auto close = [&] {
    sample.peaks.push_back({rec[best].hs, steepness_from_period(rec[best].hs, rec[best].t2)});
  };
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec[i].hs > threshold) {
      if (in_storm && calm >= static_cast<std::size_t>(cfg.min_gap)) {
        close();
        in_storm = false;
      }
      if (!in_storm || rec[i].hs > rec[best].hs) best = i;
      in_storm = true;
      calm = 0;
    } else {
      ++calm;
    }
  }
  if (in_storm) close();
  if (sample.peaks.empty())
    throw DataError(fmt::format("no exceedances of threshold {} m", threshold));

  sample.years_spanned =
      static_cast<double>(rec.back().time - rec.front().time) / kSecondsPerYear;
  if (!(sample.years_spanned > 0.0))
    throw DataError("series spans zero time; cannot compute annual rate");
  sample.n_an = static_cast<double>(sample.peaks.size()) / sample.years_spanned;
  return sample;
}

double steepness_from_period(double hs, double t2) {
  return 2.0 * std::numbers::pi * hs / (kGravity * t2 * t2);
}

double period_from_steepness(double hs, double s2) {
  return std::sqrt(2.0 * std::numbers::pi * hs / (kGravity * s2));
}

std::string format_storm_peaks(const StormPeakSample& sample) {
  std::string out = "hs,s2\n";
  for (const auto& p : sample.peaks) out += fmt::format("{},{}\n", p.hs, p.s2);
  return out;
}

StormPeakSample parse_storm_peaks(std::istream& in) {
  const auto table = csv::read(in);
  const auto ch = table.column("hs");
  const auto cs = table.column("s2");
  StormPeakSample sample;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    StormPeak p{csv::to_double(table.rows[i][ch], table.lines[i]),
                csv::to_double(table.rows[i][cs], table.lines[i])};
    if (!(p.hs > 0.0) || !(p.s2 > 0.0 && p.s2 < 1.0))
      throw DataError(fmt::format("line {}: storm peak outside hs > 0, 0 < s2 < 1",
                                  table.lines[i]));
    sample.peaks.push_back(p);
  }
  if (sample.peaks.empty()) throw DataError("no records");
  return sample;
}

StormPeakSample load_storm_peaks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  return parse_storm_peaks(in);
}

}  // namespace fcde::data
