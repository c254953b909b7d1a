#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fcde::manifest {

/// Hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct StageRecord {
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash
  std::string timestamp;                       // UTC, informational only
};

/// Stage bookkeeping stored as manifest.json in the work directory. Paths
/// inside the work directory are stored relative to it.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path workdir);

  const std::filesystem::path& workdir() const { return workdir_; }
  std::filesystem::path file() const { return workdir_ / "manifest.json"; }
  const std::map<std::string, StageRecord>& stages() const { return stages_; }

  /// True when the stage has a record with this config hash, every recorded
  /// input and output still hashes to its recorded value, and the recorded
  /// inputs are exactly `inputs`.
  bool up_to_date(const std::string& stage, const std::string& config_hash,
                  const std::vector<std::filesystem::path>& inputs) const;

  /// Throws DataError when an input produced by an earlier stage no longer
  /// matches the hash recorded for it (edited by hand or rewritten by a stale
  /// run), or is missing.
  void check_inputs(const std::vector<std::filesystem::path>& inputs) const;

  void record(const std::string& stage, const std::string& config_hash,
              const std::vector<std::filesystem::path>& inputs,
              const std::vector<std::filesystem::path>& outputs);

  void save() const;

 private:
  std::string key(const std::filesystem::path& p) const;

  std::filesystem::path workdir_;
  std::map<std::string, StageRecord> stages_;
};

}  // namespace fcde::manifest
