#include "fcde/manifest.hpp"

#include <chrono>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "fcde/csv.hpp"
#include "fcde/errors.hpp"

namespace fcde::manifest {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(csv::read_file(path));
}

Manifest::Manifest(std::filesystem::path workdir) : workdir_(std::move(workdir)) {
  if (!std::filesystem::exists(file())) return;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_file(file()));
    for (const auto& [name, rec] : j.at("stages").items()) {
      StageRecord r;
      r.config_hash = rec.at("config_hash").get<std::string>();
      r.inputs = rec.at("inputs").get<std::map<std::string, std::string>>();
      r.outputs = rec.at("outputs").get<std::map<std::string, std::string>>();
      r.timestamp = rec.value("timestamp", "");
      stages_[name] = std::move(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: malformed manifest ({})", file().string(), e.what()));
  }
}

std::string Manifest::key(const std::filesystem::path& p) const {
  const auto abs = std::filesystem::weakly_canonical(std::filesystem::absolute(p));
  const auto root = std::filesystem::weakly_canonical(std::filesystem::absolute(workdir_));
  const auto rel = abs.lexically_relative(root);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return abs.generic_string();
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& workdir, const std::string& key) {
  const std::filesystem::path p(key);
  return p.is_absolute() ? p : workdir / p;
}

bool matches(const std::filesystem::path& path, const std::string& hash) {
  return std::filesystem::exists(path) && sha256_file(path) == hash;
}

}  // namespace

bool Manifest::up_to_date(const std::string& stage, const std::string& config_hash,
                          const std::vector<std::filesystem::path>& inputs) const {
  const auto it = stages_.find(stage);
  if (it == stages_.end() || it->second.config_hash != config_hash) return false;
  const auto& rec = it->second;
  if (rec.inputs.size() != inputs.size()) return false;
  for (const auto& in : inputs) {
    const auto r = rec.inputs.find(key(in));
    if (r == rec.inputs.end() || !matches(in, r->second)) return false;
  }
  for (const auto& [path, hash] : rec.outputs)
    if (!matches(resolve(workdir_, path), hash)) return false;
  return true;
}

void Manifest::check_inputs(const std::vector<std::filesystem::path>& inputs) const {
  for (const auto& in : inputs) {
    if (!std::filesystem::exists(in))
      throw DataError(fmt::format("input {} is missing", in.string()));
    const auto k = key(in);
    for (const auto& [producer, rec] : stages_) {
      const auto r = rec.outputs.find(k);
      if (r == rec.outputs.end()) continue;
      if (sha256_file(in) != r->second)
        throw DataError(fmt::format(
            "input {} does not match the hash recorded by stage '{}' (modified or stale); "
            "rerun '{}' or pass --force",
            k, producer, producer));
    }
  }
}

void Manifest::record(const std::string& stage, const std::string& config_hash,
                      const std::vector<std::filesystem::path>& inputs,
                      const std::vector<std::filesystem::path>& outputs) {
  StageRecord r;
  r.config_hash = config_hash;
  for (const auto& in : inputs) r.inputs[key(in)] = sha256_file(in);
  for (const auto& out : outputs) r.outputs[key(out)] = sha256_file(out);
  r.timestamp = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                            std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
  stages_[stage] = std::move(r);
}

void Manifest::save() const {
  nlohmann::ordered_json j;
  j["stages"] = nlohmann::ordered_json::object();
  for (const auto& [name, rec] : stages_) {
    j["stages"][name] = {{"config_hash", rec.config_hash},
                         {"inputs", rec.inputs},
                         {"outputs", rec.outputs},
                         {"timestamp", rec.timestamp}};
  }
  csv::write_file(file(), j.dump(2) + "\n");
}

}  // namespace fcde::manifest
