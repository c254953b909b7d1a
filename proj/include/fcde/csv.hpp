#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace fcde::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number in the source for each row.
  std::vector<std::size_t> lines;

  /// Index of a header column; throws DataError if absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a comma-separated table with a header row. Blank lines and lines
/// starting with '#' are skipped. Fields are trimmed of whitespace.
Table read(std::istream& in);
Table read(const std::filesystem::path& path);

double to_double(std::string_view field, std::size_t line);

/// Writes `text` to `path`, creating parent directories. Goes through a
/// temporary file so a failed run never leaves a truncated output behind.
void write_file(const std::filesystem::path& path, std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Shortest round-trippable decimal representation.
std::string format_double(double x);

}  // namespace fcde::csv
