#include "fcde/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "fcde/csv.hpp"
#include "fcde/errors.hpp"

namespace fcde::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
  return x;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, v));
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  int x = 0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, v));
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  return out;
}

std::string num(double x) { return fmt::format("{}", x); }

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s;
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FCDE_DOUBLE(sec, key, field)                                                       \
  Key {                                                                                    \
    sec, key, [](RunConfig& c, const std::string& v) { c.field = to_double(sec "." key, v); }, \
        [](const RunConfig& c) { return num(c.field); }                                    \
  }
#define FCDE_SIZE(sec, key, field)                                                         \
  Key {                                                                                    \
    sec, key,                                                                              \
        [](RunConfig& c, const std::string& v) {                                           \
          c.field = static_cast<decltype(c.field)>(to_unsigned(sec "." key, v));           \
        },                                                                                 \
        [](const RunConfig& c) { return fmt::format("{}", c.field); }                      \
  }
#define FCDE_INT(sec, key, field)                                                          \
  Key {                                                                                    \
    sec, key, [](RunConfig& c, const std::string& v) { c.field = to_int(sec "." key, v); }, \
        [](const RunConfig& c) { return fmt::format("{}", c.field); }                      \
  }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      Key{"paths", "input", [](RunConfig& c, const std::string& v) { c.input = trim(v); },
          [](const RunConfig& c) { return c.input.string(); }},
      Key{"paths", "workdir", [](RunConfig& c, const std::string& v) { c.workdir = trim(v); },
          [](const RunConfig& c) { return c.workdir.string(); }},
      Key{"paths", "structures",
          [](RunConfig& c, const std::string& v) {
            c.structures.clear();
            for (const auto& s : split_list(v)) c.structures.emplace_back(s);
          },
          [](const RunConfig& c) {
            std::string s;
            for (std::size_t i = 0; i < c.structures.size(); ++i)
              s += (i ? ", " : "") + c.structures[i].string();
            return s;
          }},
      FCDE_SIZE("seeds", "master", master_seed),
      Key{"synth", "enabled",
          [](RunConfig& c, const std::string& v) { c.synth_enabled = to_bool("synth.enabled", v); },
          [](const RunConfig& c) { return std::string(c.synth_enabled ? "true" : "false"); }},
      FCDE_DOUBLE("synth", "years", synth.years),
      FCDE_DOUBLE("synth", "rate", synth.rate),
      FCDE_DOUBLE("synth", "cadence_hours", synth.cadence_hours),
      FCDE_INT("synth", "half_width", synth.half_width),
      FCDE_INT("synth", "min_separation", synth.min_separation),
      FCDE_DOUBLE("synth", "hs_base", synth.hs_base),
      FCDE_DOUBLE("synth", "gpd_sigma", synth.gpd_sigma),
      FCDE_DOUBLE("synth", "gpd_xi", synth.gpd_xi),
      FCDE_DOUBLE("synth", "background_lo", synth.background_lo),
      FCDE_DOUBLE("synth", "background_hi", synth.background_hi),
      FCDE_DOUBLE("synth", "background_s2", synth.background_s2),
      Key{"synth", "dependence",
          [](RunConfig& c, const std::string& v) {
            c.synth.dependence = synth::dependence_from_string(trim(v));
          },
          [](const RunConfig& c) { return synth::to_string(c.synth.dependence); }},
      FCDE_DOUBLE("synth", "s2_mu0", synth.s2_mu0),
      FCDE_DOUBLE("synth", "s2_mu1", synth.s2_mu1),
      FCDE_DOUBLE("synth", "s2_sigma", synth.s2_sigma),
      FCDE_DOUBLE("synth", "ht_alpha", synth.ht_alpha),
      FCDE_DOUBLE("synth", "ht_beta", synth.ht_beta),
      FCDE_DOUBLE("synth", "z_mu", synth.z_mu),
      FCDE_DOUBLE("synth", "z_sd", synth.z_sd),
      FCDE_DOUBLE("peaks", "threshold_quantile", peaks.threshold_quantile),
      FCDE_INT("peaks", "min_gap", peaks.min_gap),
      Key{"peaks", "threshold_value",
          [](RunConfig& c, const std::string& v) {
            if (trim(v).empty() || trim(v) == "none")
              c.peaks.threshold_value.reset();
            else
              c.peaks.threshold_value = to_double("peaks.threshold_value", v);
          },
          [](const RunConfig& c) {
            return c.peaks.threshold_value ? num(*c.peaks.threshold_value) : std::string("none");
          }},
      FCDE_DOUBLE("marginal", "hs_threshold", hs_threshold),
      FCDE_DOUBLE("marginal", "s2_threshold", s2_threshold),
      Key{"marginal", "body",
          [](RunConfig& c, const std::string& v) {
            try {
              c.body = marginal::body_cdf_from_string(trim(v));
            } catch (const std::exception& e) {
              throw ConfigError(fmt::format("marginal.body: {}", e.what()));
            }
          },
          [](const RunConfig& c) { return marginal::to_string(c.body); }},
      Key{"marginal", "diagnostic_grid",
          [](RunConfig& c, const std::string& v) {
            c.diagnostic_grid = to_doubles("marginal.diagnostic_grid", v);
          },
          [](const RunConfig& c) { return join(c.diagnostic_grid); }},
      FCDE_INT("marginal", "n_boot", n_boot),
      FCDE_DOUBLE("ht", "threshold_quantile", ht_threshold),
      FCDE_DOUBLE("ht", "bandwidth_multiplier", kde_bandwidth_multiplier),
      FCDE_SIZE("simulate", "n_sim", n_sim),
      FCDE_SIZE("simulate", "grid_hs", grid_hs),
      FCDE_SIZE("simulate", "grid_s2", grid_s2),
      FCDE_SIZE("response", "crests", crests),
      FCDE_DOUBLE("response", "epsilon", epsilon),
      FCDE_DOUBLE("response", "hours", hours),
      FCDE_DOUBLE("response", "jonswap_gamma", jonswap.gamma),
      FCDE_DOUBLE("response", "jonswap_r", jonswap.r),
      FCDE_DOUBLE("response", "window", wave_grid.window),
      FCDE_SIZE("response", "n_t", wave_grid.n_t),
      FCDE_DOUBLE("response", "z_min", wave_grid.z_min),
      FCDE_DOUBLE("response", "z_max", wave_grid.z_max),
      FCDE_SIZE("response", "n_z", wave_grid.n_z),
      FCDE_DOUBLE("response", "depth", wave_grid.depth),
      Key{"return", "periods",
          [](RunConfig& c, const std::string& v) { c.periods = to_doubles("return.periods", v); },
          [](const RunConfig& c) { return join(c.periods); }},
      FCDE_DOUBLE("return", "design_period", design_period),
      FCDE_DOUBLE("return", "bandwidth_multiplier", cde_bandwidth_multiplier),
      FCDE_DOUBLE("return", "frontier_threshold", frontier_threshold),
      FCDE_SIZE("contour", "points", contour_points),
      Key{"contour", "models",
          [](RunConfig& c, const std::string& v) {
            c.contour_models.clear();
            if (trim(v) == "auto" || trim(v).empty()) return;
            for (const auto& s : split_list(v)) c.contour_models.push_back(contours::ModelSpec::parse(s));
          },
          [](const RunConfig& c) {
            if (c.contour_models.empty()) return std::string("auto");
            std::string s;
            for (std::size_t i = 0; i < c.contour_models.size(); ++i)
              s += (i ? ", " : "") + c.contour_models[i].label();
            return s;
          }},
      FCDE_SIZE("contour", "count", n_contours),
      FCDE_INT("contour", "replicates", score.replicates),
      Key{"contour", "folds",
          [](RunConfig& c, const std::string& v) {
            c.score.folds.clear();
            for (const auto& s : split_list(v)) c.score.folds.push_back(to_int("contour.folds", s));
          },
          [](const RunConfig& c) {
            std::string s;
            for (std::size_t i = 0; i < c.score.folds.size(); ++i)
              s += (i ? ", " : "") + std::to_string(c.score.folds[i]);
            return s;
          }},
      Key{"contour", "tail_quantiles",
          [](RunConfig& c, const std::string& v) {
            c.score.tail_quantiles = to_doubles("contour.tail_quantiles", v);
          },
          [](const RunConfig& c) { return join(c.score.tail_quantiles); }},
      FCDE_INT("contour", "cv_max_evaluations", score.cv_max_evaluations),
      FCDE_SIZE("cli", "threads", threads),
      Key{"cli", "log_level", [](RunConfig& c, const std::string& v) { c.log_level = trim(v); },
          [](const RunConfig& c) { return c.log_level; }},
  };
  return keys;
}

#undef FCDE_DOUBLE
#undef FCDE_SIZE
#undef FCDE_INT

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  auto prob = [](double p) { return p > 0.0 && p < 1.0; };
  synth.validate();
  try {
    peaks.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("peaks: {}", e.what()));
  }
  need(prob(hs_threshold), "marginal.hs_threshold must lie in (0, 1)");
  need(prob(s2_threshold), "marginal.s2_threshold must lie in (0, 1)");
  need(!diagnostic_grid.empty(), "marginal.diagnostic_grid is empty");
  for (std::size_t i = 0; i < diagnostic_grid.size(); ++i) {
    need(diagnostic_grid[i] > 0.5 && diagnostic_grid[i] < 0.99,
         "marginal.diagnostic_grid entries must lie in (0.5, 0.99)");
    need(i == 0 || diagnostic_grid[i] > diagnostic_grid[i - 1],
         "marginal.diagnostic_grid must be strictly increasing");
  }
  need(n_boot >= 0, "marginal.n_boot must be >= 0");
  need(prob(ht_threshold), "ht.threshold_quantile must lie in (0, 1)");
  need(kde_bandwidth_multiplier >= 0.0, "ht.bandwidth_multiplier must be >= 0");
  need(n_sim >= 1, "simulate.n_sim must be >= 1");
  need(grid_hs >= 1 && grid_s2 >= 1, "simulate grid needs at least one cell per axis");
  need(crests >= 1, "response.crests must be >= 1");
  need(epsilon > 0.0, "response.epsilon must be positive");
  need(hours > 0.0, "response.hours must be positive");
  need(jonswap.gamma >= 1.0, "response.jonswap_gamma must be >= 1");
  need(jonswap.r > 0.0, "response.jonswap_r must be positive");
  try {
    wave_grid.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("response grid: {}", e.what()));
  }
  need(!periods.empty(), "return.periods is empty");
  for (double p : periods) need(p > 1.0, "return periods must exceed 1 year");
  need(design_period > 1.0, "return.design_period must exceed 1 year");
  need(cde_bandwidth_multiplier > 0.0, "return.bandwidth_multiplier must be positive");
  need(contour_points >= 8, "contour.points must be >= 8");
  need(n_contours >= 1, "contour.count must be >= 1");
  need(score.replicates >= 1, "contour.replicates must be >= 1");
  need(!score.folds.empty() && !score.tail_quantiles.empty(), "contour CV settings are empty");
  for (int k : score.folds) need(k >= 2, "contour.folds entries must be >= 2");
  for (double v : score.tail_quantiles)
    need(v >= 0.0 && v < 1.0, "contour.tail_quantiles entries must lie in [0, 1)");
  need(score.cv_max_evaluations >= 10, "contour.cv_max_evaluations must be >= 10");
  need(log_level == "quiet" || log_level == "warn" || log_level == "info",
       "cli.log_level must be quiet, warn or info");
  for (const auto& s : structures)
    need(std::filesystem::exists(resolve(s)),
         fmt::format("structure file {} does not exist", resolve(s).string()));
}

std::string section_text(const RunConfig& cfg, const std::string& section) {
  std::string out = "[" + section + "]\n";
  for (const auto& k : registry())
    if (k.section == section) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::string to_ini(const RunConfig& cfg) {
  std::string out;
  std::string last;
  for (const auto& k : registry()) {
    if (k.section == last) continue;
    if (!out.empty()) out += "\n";
    out += section_text(cfg, k.section);
    last = k.section;
  }
  return out;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  RunConfig cfg;
  cfg.base_dir = base_dir;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(fmt::format("config key '{}' outside any section", section));
    for (const auto& [key, value] : body) {
      const Key* match = nullptr;
      for (const auto& k : registry())
        if (k.section == section && k.name == key) match = &k;
      if (!match) throw ConfigError(fmt::format("unknown config key [{}] {}", section, key));
      match->set(cfg, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError(fmt::format("config file {} does not exist", path.string()));
  return parse_config(csv::read_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

}  // namespace fcde::config
