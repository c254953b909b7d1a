#include "fcde/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fcde/csv.hpp"
#include "fcde/data.hpp"
#include "fcde/errors.hpp"
#include "fcde/log.hpp"
#include "fcde/manifest.hpp"
#include "fcde/parallel.hpp"
#include "fcde/rng.hpp"
#include "fcde/synth.hpp"
#include "fcde/waves.hpp"

namespace fcde::pipeline {

using json = nlohmann::ordered_json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Stage, std::string>>& stage_names() {
  static const std::vector<std::pair<Stage, std::string>> names = {
      {Stage::Synth, "synth"},         {Stage::Peaks, "peaks"},
      {Stage::FitMarginal, "fit-marginal"}, {Stage::FitHt, "fit-ht"},
      {Stage::SimulateEnv, "simulate-env"}, {Stage::Respond, "respond"},
      {Stage::Cde, "cde"},             {Stage::Contour, "contour"},
      {Stage::Zeta, "zeta"},           {Stage::Report, "report"}};
  return names;
}

// Stream index of each stage's random numbers under the master seed.
std::uint64_t stage_seed(const config::RunConfig& cfg, Stage s) {
  return derive_seed(cfg.master_seed, static_cast<std::uint64_t>(s) + 1);
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(csv::read_file(path));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed JSON ({})", path.string(), e.what()));
  }
}

double num_or_nan(const json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

// JSON has no NaN or infinity; they are written as null.
json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

struct PeaksMeta {
  double n_an = 0.0;
  double years = 0.0;
  std::size_t n_peaks = 0;
};

PeaksMeta load_peaks_meta(const fs::path& path) {
  const auto j = parse_json(path);
  PeaksMeta m;
  try {
    m.n_an = j.at("n_an").get<double>();
    m.years = j.at("years_spanned").get<double>();
    m.n_peaks = j.at("n_peaks").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return m;
}

data::StormPeakSample load_peaks(const WorkPaths& p) {
  auto sample = data::load_storm_peaks(p.peaks());
  const auto meta = load_peaks_meta(p.peaks_meta());
  sample.n_an = meta.n_an;
  sample.years_spanned = meta.years;
  return sample;
}

condext::JointDensityGrid load_density(const WorkPaths& p) {
  const auto meta = parse_json(p.env_meta());
  return condext::parse_density_grid(csv::read_file(p.density_grid()),
                                     meta.at("n_sim").get<std::size_t>());
}

std::vector<std::optional<response::ResponseDistribution>> cell_distributions(
    const std::vector<response::WeightedResponseSample>& samples, double hours) {
  std::vector<std::optional<response::ResponseDistribution>> out(samples.size());
  for (std::size_t c = 0; c < samples.size(); ++c)
    if (!samples[c].entries.empty()) out[c] = response::response_cdf(samples[c], hours);
  return out;
}

std::vector<const response::ResponseDistribution*> pointers(
    const std::vector<std::optional<response::ResponseDistribution>>& d) {
  std::vector<const response::ResponseDistribution*> out;
  for (const auto& x : d) out.push_back(x ? &*x : nullptr);
  return out;
}

struct ContourEntry {
  std::string label;
  contours::ModelSpec spec;
  fs::path file;
};

std::vector<ContourEntry> load_contour_index(const WorkPaths& p) {
  const auto j = parse_json(p.contours_index());
  std::vector<ContourEntry> out;
  for (const auto& c : j.at("contours")) {
    ContourEntry e;
    e.label = c.at("label").get<std::string>();
    e.spec = contours::ModelSpec::parse(c.at("model").get<std::string>());
    e.file = p.contour(e.label);
    out.push_back(std::move(e));
  }
  return out;
}

contours::Contour load_contour(const WorkPaths& p, const std::string& label) {
  auto c = parse_contour(csv::read_file(p.contour(label)));
  const auto j = parse_json(p.contours_index());
  for (const auto& e : j.at("contours")) {
    if (e.at("label").get<std::string>() != label) continue;
    c.label = label;
    c.center = {e.at("center").at("hs").get<double>(), e.at("center").at("s2").get<double>()};
    c.beta = e.at("beta").get<double>();
    c.period = e.at("period").get<double>();
    c.n_an = e.at("n_an").get<double>();
    c.clamped = e.at("clamped").get<bool>();
  }
  return c;
}

}  // namespace

std::string to_string(Stage s) {
  for (const auto& [st, name] : stage_names())
    if (st == s) return name;
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (const auto& [st, name] : stage_names())
    if (name == s) return st;
  throw ConfigError(fmt::format("unknown stage '{}'", s));
}

std::vector<Stage> pipeline_stages(const config::RunConfig& cfg) {
  std::vector<Stage> out;
  if (cfg.synth_enabled) out.push_back(Stage::Synth);
  for (auto s : {Stage::Peaks, Stage::FitMarginal, Stage::FitHt, Stage::SimulateEnv,
                 Stage::Respond, Stage::Cde, Stage::Contour, Stage::Zeta, Stage::Report})
    out.push_back(s);
  return out;
}

std::string marginal_to_json(const marginal::MarginalModel& m, double threshold_quantile) {
  const auto& g = m.gpd();
  ojson j;
  j["threshold_quantile"] = threshold_quantile;
  j["body"] = marginal::to_string(m.body());
  j["gpd"] = {{"u", g.u},
              {"sigma", g.sigma},
              {"xi", g.xi},
              {"p_u", g.p_u},
              {"n_exc", g.n_exc},
              {"se_sigma", finite_or_null(g.se_sigma)},
              {"se_xi", finite_or_null(g.se_xi)},
              {"log_likelihood", g.log_likelihood},
              {"converged", g.converged}};
  j["sample"] = m.sorted_sample();
  return j.dump(1) + "\n";
}

marginal::MarginalModel marginal_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    marginal::GpdFit g;
    const auto& jg = j.at("gpd");
    g.u = jg.at("u").get<double>();
    g.sigma = jg.at("sigma").get<double>();
    g.xi = jg.at("xi").get<double>();
    g.p_u = jg.at("p_u").get<double>();
    g.n_exc = jg.at("n_exc").get<std::size_t>();
    g.se_sigma = num_or_nan(jg.at("se_sigma"));
    g.se_xi = num_or_nan(jg.at("se_xi"));
    g.log_likelihood = jg.at("log_likelihood").get<double>();
    g.converged = jg.at("converged").get<bool>();
    return marginal::MarginalModel(j.at("sample").get<std::vector<double>>(), g,
                                   marginal::body_cdf_from_string(j.at("body").get<std::string>()));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed marginal model: {}", e.what()));
  }
}

std::string ht_to_json(const condext::HtFit& f) {
  ojson j;
  j["alpha"] = f.alpha;
  j["beta"] = f.beta;
  j["se_alpha"] = finite_or_null(f.se_alpha);
  j["se_beta"] = finite_or_null(f.se_beta);
  j["v"] = f.v;
  j["threshold_quantile"] = f.threshold_quantile;
  j["mu_hat"] = f.mu_hat;
  j["s_hat"] = f.s_hat;
  j["log_likelihood"] = f.log_likelihood;
  j["converged"] = f.converged;
  j["n_exc"] = f.n_exc;
  j["kde_bandwidth"] = f.kde_bandwidth;
  j["residuals"] = f.residuals;
  std::vector<std::array<double, 2>> body;
  for (const auto& [a, b] : f.body) body.push_back({a, b});
  j["body"] = body;
  return j.dump(1) + "\n";
}

condext::HtFit ht_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    condext::HtFit f;
    f.alpha = j.at("alpha").get<double>();
    f.beta = j.at("beta").get<double>();
    f.se_alpha = num_or_nan(j.at("se_alpha"));
    f.se_beta = num_or_nan(j.at("se_beta"));
    f.v = j.at("v").get<double>();
    f.threshold_quantile = j.at("threshold_quantile").get<double>();
    f.mu_hat = j.at("mu_hat").get<double>();
    f.s_hat = j.at("s_hat").get<double>();
    f.log_likelihood = j.at("log_likelihood").get<double>();
    f.converged = j.at("converged").get<bool>();
    f.n_exc = j.at("n_exc").get<std::size_t>();
    f.kde_bandwidth = j.at("kde_bandwidth").get<double>();
    f.residuals = j.at("residuals").get<std::vector<double>>();
    for (const auto& p : j.at("body").get<std::vector<std::array<double, 2>>>())
      f.body.emplace_back(p[0], p[1]);
    return f;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed conditional extremes fit: {}", e.what()));
  }
}

std::string format_cell_responses(const std::vector<std::vector<response::WeightedResponse>>& cells,
                                  const condext::GridEdges& edges) {
  std::string out = "cell,hs,s2,crest,response,weight\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto m = edges.midpoint(c);
    for (const auto& e : cells[c])
      out += fmt::format("{},{},{},{},{},{}\n", c, m.hs, m.s2, e.crest, e.response, e.weight);
  }
  return out;
}

std::vector<response::WeightedResponseSample> parse_cell_responses(
    const std::string& text, const condext::GridEdges& edges, double epsilon) {
  std::istringstream in(text);
  const auto t = csv::read(in);
  const auto ic = t.column("cell"), ihs = t.column("hs"), is2 = t.column("s2"),
             icr = t.column("crest"), ir = t.column("response"), iw = t.column("weight");
  std::vector<response::WeightedResponseSample> out(edges.cells());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const double cell = csv::to_double(row[ic], t.lines[i]);
    if (!(cell >= 0.0) || cell >= static_cast<double>(edges.cells()) || cell != std::floor(cell))
      throw DataError(fmt::format("line {}: cell index {} outside the grid", t.lines[i], row[ic]));
    auto& s = out[static_cast<std::size_t>(cell)];
    s.epsilon = epsilon;
    s.seastate = {csv::to_double(row[ihs], t.lines[i]), csv::to_double(row[is2], t.lines[i])};
    s.entries.push_back({csv::to_double(row[icr], t.lines[i]), csv::to_double(row[ir], t.lines[i]),
                         csv::to_double(row[iw], t.lines[i])});
  }
  return out;
}

contours::Contour parse_contour(const std::string& csv_text) {
  std::istringstream in(csv_text);
  const auto t = csv::read(in);
  const auto ia = t.column("angle"), i1 = t.column("u1"), i2 = t.column("u2"),
             ih = t.column("hs"), is = t.column("s2");
  contours::Contour c;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    auto val = [&](std::size_t k) {
      return r[k] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                           : csv::to_double(r[k], t.lines[i]);
    };
    c.angle.push_back(val(ia));
    c.u1.push_back(val(i1));
    c.u2.push_back(val(i2));
    c.hs.push_back(val(ih));
    c.s2.push_back(val(is));
  }
  c.k = c.angle.size();
  return c;
}

Structures load_structures(const config::RunConfig& cfg) {
  Structures s;
  if (cfg.structures.empty()) {
    for (char c : {'A', 'B', 'C'}) s.specs.push_back(response::reference_structure(c));
    return s;
  }
  std::set<std::string> names;
  for (const auto& f : cfg.structures) {
    const auto path = cfg.resolve(f);
    s.specs.push_back(response::load_structure(path));
    s.files.push_back(path);
    if (!names.insert(s.specs.back().name).second)
      throw ConfigError(fmt::format("duplicate structure name '{}'", s.specs.back().name));
  }
  return s;
}

Runner::Runner(config::RunConfig cfg, RunOptions options)
    : cfg_(std::move(cfg)), options_(options), paths_{cfg_.work_path()} {}

namespace {

struct StagePlan {
  std::vector<std::string> sections;
  std::vector<fs::path> inputs;
};

std::vector<fs::path> structure_inputs(const config::RunConfig& cfg) {
  return load_structures(cfg).files;
}

StagePlan plan(const config::RunConfig& cfg, const WorkPaths& p, Stage s) {
  const auto structures = load_structures(cfg);
  switch (s) {
    case Stage::Synth:
      return {{"synth", "seeds"}, {}};
    case Stage::Peaks:
      return {{"peaks"}, {cfg.input_path()}};
    case Stage::FitMarginal:
      return {{"marginal", "seeds"}, {p.peaks()}};
    case Stage::FitHt:
      return {{"ht"}, {p.peaks(), p.marginal("hs"), p.marginal("s2")}};
    case Stage::SimulateEnv:
      return {{"simulate", "seeds"}, {p.ht_fit(), p.marginal("hs"), p.marginal("s2")}};
    case Stage::Respond: {
      StagePlan pl{{"response", "paths", "seeds"}, {p.density_grid(), p.env_meta()}};
      for (const auto& f : structure_inputs(cfg)) pl.inputs.push_back(f);
      return pl;
    }
    case Stage::Cde: {
      StagePlan pl{{"response", "return"}, {p.density_grid(), p.env_meta(), p.peaks_meta()}};
      for (const auto& st : structures.specs) pl.inputs.push_back(p.responses(st.name));
      return pl;
    }
    case Stage::Contour:
      return {{"contour", "return", "seeds"}, {p.peaks(), p.peaks_meta(), p.marginal("hs")}};
    case Stage::Zeta: {
      StagePlan pl{{}, {p.contours_index()}};
      if (fs::exists(p.contours_index()))
        for (const auto& e : load_contour_index(p)) pl.inputs.push_back(e.file);
      for (const auto& st : structures.specs) pl.inputs.push_back(p.cde(st.name));
      return pl;
    }
    case Stage::Report: {
      StagePlan pl{{"response", "return"},
                   {p.peaks_meta(), p.marginal("hs"), p.marginal("s2"), p.ht_fit(),
                    p.contours_index(), p.zeta()}};
      for (const auto& st : structures.specs) {
        pl.inputs.push_back(p.return_values(st.name));
        pl.inputs.push_back(p.cde_meta(st.name));
        pl.inputs.push_back(p.frontier(st.name));
      }
      return pl;
    }
  }
  return {};
}

std::string config_hash(const config::RunConfig& cfg, Stage s, const StagePlan& pl) {
  std::string text = "stage = " + to_string(s) + "\n";
  for (const auto& sec : pl.sections) {
    if (sec == "seeds")
      text += fmt::format("[seeds]\nmaster = {}\n", cfg.master_seed);
    else
      text += config::section_text(cfg, sec);
  }
  return manifest::sha256_hex(text);
}

using Outputs = std::vector<fs::path>;

Outputs run_synth(const config::RunConfig& cfg) {
  const auto seed = stage_seed(cfg, Stage::Synth);
  const auto result = synth::generate(cfg.synth, seed);
  const auto input = cfg.input_path();
  const auto truth = input.parent_path() / "synth_truth.json";
  csv::write_file(input, data::format_hindcast(result.series));
  csv::write_file(truth, synth::truth_json(cfg.synth, seed, result));
  log::info(fmt::format("synth: {} sea states, {} storms", result.series.size(), result.peaks.size()));
  return {input, truth};
}

Outputs run_peaks(const config::RunConfig& cfg, const WorkPaths& p) {
  if (!fs::exists(cfg.input_path()))
    throw ConfigError(fmt::format("input hindcast {} does not exist (enable [synth] or run "
                                  "'fcde synth')",
                                  cfg.input_path().string()));
  const auto series = data::load_hindcast(cfg.input_path());
  const auto sample = data::extract_storm_peaks(series, cfg.peaks);
  csv::write_file(p.peaks(), data::format_storm_peaks(sample));
  ojson meta;
  meta["n_peaks"] = sample.peaks.size();
  meta["n_an"] = sample.n_an;
  meta["years_spanned"] = sample.years_spanned;
  meta["threshold"] = data::peak_threshold(series, cfg.peaks);
  meta["threshold_quantile"] = cfg.peaks.threshold_quantile;
  meta["min_gap"] = cfg.peaks.min_gap;
  meta["n_sea_states"] = series.size();
  csv::write_file(p.peaks_meta(), meta.dump(2) + "\n");
  return {p.peaks(), p.peaks_meta()};
}

Outputs run_fit_marginal(const config::RunConfig& cfg, const WorkPaths& p) {
  const auto sample = data::load_storm_peaks(p.peaks());
  const auto seed = stage_seed(cfg, Stage::FitMarginal);
  Outputs out;
  const std::vector<std::pair<std::string, std::vector<double>>> vars = {{"hs", sample.hs()},
                                                                         {"s2", sample.s2()}};
  for (std::size_t v = 0; v < vars.size(); ++v) {
    const auto& [name, x] = vars[v];
    const double q = name == "hs" ? cfg.hs_threshold : cfg.s2_threshold;
    const auto model = marginal::MarginalModel::fit(x, q, cfg.body);
    csv::write_file(p.marginal(name), marginal_to_json(model, q));
    const auto diag =
        marginal::threshold_diagnostics(x, cfg.diagnostic_grid, cfg.n_boot, derive_seed(seed, v));
    csv::write_file(p.diagnostics(name), marginal::format_diagnostics(diag));
    out.push_back(p.marginal(name));
    out.push_back(p.diagnostics(name));
  }
  return out;
}

Outputs run_fit_ht(const config::RunConfig& cfg, const WorkPaths& p) {
  const auto sample = data::load_storm_peaks(p.peaks());
  const auto hs_model = marginal_from_json(csv::read_file(p.marginal("hs")));
  const auto s2_model = marginal_from_json(csv::read_file(p.marginal("s2")));
  std::vector<double> y1, y2;
  for (const auto& pk : sample.peaks) {
    y1.push_back(hs_model.to_laplace(pk.hs));
    y2.push_back(s2_model.to_laplace(pk.s2));
  }
  const auto fit = condext::fit_ht(y1, y2, {cfg.ht_threshold, cfg.kde_bandwidth_multiplier});
  csv::write_file(p.ht_fit(), ht_to_json(fit));
  return {p.ht_fit()};
}

Outputs run_simulate(const config::RunConfig& cfg, const WorkPaths& p) {
  const auto fit = ht_from_json(csv::read_file(p.ht_fit()));
  const auto hs_model = marginal_from_json(csv::read_file(p.marginal("hs")));
  const auto s2_model = marginal_from_json(csv::read_file(p.marginal("s2")));
  const auto sample =
      condext::simulate_joint(fit, hs_model, s2_model, cfg.n_sim, stage_seed(cfg, Stage::SimulateEnv));
  const auto edges = condext::hull_edges(sample, cfg.grid_hs, cfg.grid_s2);
  const auto grid = condext::estimate_density_grid(sample, edges);
  csv::write_file(p.env_sample(), condext::format_env_sample(sample));
  csv::write_file(p.density_grid(), condext::format_density_grid(grid));
  ojson meta;
  meta["n_sim"] = cfg.n_sim;
  meta["grid_hs"] = cfg.grid_hs;
  meta["grid_s2"] = cfg.grid_s2;
  meta["total_mass"] = grid.total_mass();
  csv::write_file(p.env_meta(), meta.dump(2) + "\n");
  return {p.env_sample(), p.density_grid(), p.env_meta()};
}

Outputs run_respond(const config::RunConfig& cfg, const WorkPaths& p) {
  const auto density = load_density(p);
  const auto structures = load_structures(cfg);
  const auto& edges = density.edges;
  const std::size_t n_cells = edges.cells();
  const std::size_t n_struct = structures.specs.size();
  // responses[s][cell]
  std::vector<std::vector<std::vector<response::WeightedResponse>>> responses(
      n_struct, std::vector<std::vector<response::WeightedResponse>>(n_cells));
  response::ResponseSimOptions opts;
  opts.grid = cfg.wave_grid;
  opts.jonswap = cfg.jonswap;
  opts.threads = 1;
  const auto seed = stage_seed(cfg, Stage::Respond);
  std::vector<char> skipped(n_cells, 0);
  parallel_for(n_cells, [&](std::size_t c) {
    const auto m = edges.midpoint(c);
    try {
      const auto samples = response::simulate_response_samples(
          {m.hs, m.s2}, structures.specs, cfg.crests, cfg.epsilon, derive_seed(seed, c), opts);
      for (std::size_t s = 0; s < n_struct; ++s) responses[s][c] = samples[s].entries;
    } catch (const std::exception& e) {
      if (density.mass[c] > 0.0)
        throw NumericalError(fmt::format("cell {} (hs = {:.4g}, s2 = {:.4g}): {}", c, m.hs, m.s2,
                                         e.what()));
      skipped[c] = 1;
    }
  });
  const auto n_skipped = std::count(skipped.begin(), skipped.end(), 1);
  if (n_skipped > 0)
    log::warn(fmt::format("respond: {} zero-mass cells outside the wave model's range were skipped",
                          n_skipped));

  const auto meta = load_peaks_meta(p.peaks_meta());
  Outputs out;
  for (std::size_t s = 0; s < n_struct; ++s) {
    const auto& name = structures.specs[s].name;
    const auto text = format_cell_responses(responses[s], edges);
    csv::write_file(p.responses(name), text);
    out.push_back(p.responses(name));

    const auto dists = cell_distributions(parse_cell_responses(text, edges, cfg.epsilon), cfg.hours);
    const response::StormMaxDistribution storm(density, pointers(dists));
    std::string rv = "P,r_P\n";
    for (double period : cfg.periods)
      rv += fmt::format("{},{}\n", period, response::return_value(storm, meta.n_an, period));
    csv::write_file(p.return_values(name), rv);
    const auto& support = storm.support();
    std::string cdf = "r,F_RS,F_RA\n";
    const double r_max = support.empty() ? 0.0 : support.back();
    for (int i = 0; i <= 400; ++i) {
      const double r = r_max * i / 400.0;
      const double f = storm.cdf(r);
      cdf += fmt::format("{},{},{}\n", r, f, std::exp(-meta.n_an * storm.survival(r)));
    }
    csv::write_file(p.rs_cdf(name), cdf);
    out.push_back(p.return_values(name));
    out.push_back(p.rs_cdf(name));
  }
  return out;
}

Outputs run_cde(const config::RunConfig& cfg, const WorkPaths& p) {
  const auto density = load_density(p);
  const auto structures = load_structures(cfg);
  const auto meta = load_peaks_meta(p.peaks_meta());
  Outputs out;
  for (const auto& st : structures.specs) {
    const auto samples =
        parse_cell_responses(csv::read_file(p.responses(st.name)), density.edges, cfg.epsilon);
    const auto dists = cell_distributions(samples, cfg.hours);
    const auto ptrs = pointers(dists);
    const response::StormMaxDistribution storm(density, ptrs);
    const double r_p = response::return_value(storm, meta.n_an, cfg.design_period);
    const auto grid = response::cde(density, ptrs, r_p, cfg.cde_bandwidth_multiplier);
    const auto map = response::exceedance_map(ptrs, r_p, density.edges);
    const auto frontier = response::exceedance_frontier(map, ptrs, cfg.frontier_threshold);
    csv::write_file(p.cde(st.name), response::format_cde(grid));
    csv::write_file(p.exceedance_map(st.name), response::format_exceedance_map(map));
    std::string ft = "s2_lo,s2_hi,hs\n";
    for (std::size_t j = 0; j < frontier.size(); ++j)
      ft += fmt::format("{},{},{}\n", density.edges.s2[j], density.edges.s2[j + 1],
                        std::isnan(frontier[j]) ? std::string() : fmt::format("{}", frontier[j]));
    csv::write_file(p.frontier(st.name), ft);
    ojson m;
    m["structure"] = st.name;
    m["design_period"] = cfg.design_period;
    m["r_p"] = r_p;
    m["denominator"] = grid.denominator;
    m["normalization_residual"] = grid.normalization_residual;
    m["integral"] = grid.integral();
    csv::write_file(p.cde_meta(st.name), m.dump(2) + "\n");
    for (const auto& f : {p.cde(st.name), p.exceedance_map(st.name), p.frontier(st.name),
                          p.cde_meta(st.name)})
      out.push_back(f);
  }
  return out;
}

Outputs run_contour(const config::RunConfig& cfg, const WorkPaths& p) {
  const auto sample = load_peaks(p);
  const auto hs = sample.hs(), s2 = sample.s2();
  const auto hs_model = marginal_from_json(csv::read_file(p.marginal("hs")));
  auto settings = cfg.score;
  settings.seed = stage_seed(cfg, Stage::Contour);
  const auto specs = cfg.contour_models.empty() ? contours::all_model_specs() : cfg.contour_models;
  const auto rows = contours::run_model_zoo(hs, s2, specs, settings, cfg.threads);
  csv::write_file(p.zoo(), contours::format_zoo(rows, settings));

  const bool automatic = cfg.contour_models.empty();
  std::vector<const contours::ZooRow*> candidates;
  if (!automatic) {
    for (const auto& spec : cfg.contour_models)
      for (const auto& r : rows)
        if (r.spec == spec && r.score.ok()) candidates.push_back(&r);
  } else {
    for (const auto& r : rows)
      if (r.score.ok() && !std::isnan(r.score.as)) candidates.push_back(&r);
  }
  if (candidates.empty())
    throw NumericalError("no conditional model could be fitted for the contours");

  const double anchor = contours::default_reflect_anchor(s2);
  const contours::SemiparametricMarginal ml(hs_model);
  Outputs out{p.zoo()};
  ojson index;
  index["design_period"] = cfg.design_period;
  index["n_an"] = sample.n_an;
  index["contours"] = ojson::array();
  // With automatic selection, keep the best model of each (family, transform)
  // whose contour is a closed curve.
  std::set<std::pair<contours::Family, bool>> seen;
  std::size_t kept = 0;
  for (const auto* row : candidates) {
    if (kept == cfg.n_contours) break;
    const auto key = std::make_pair(row->spec.family, row->spec.reflected);
    if (automatic && seen.count(key)) continue;
    const auto model = contours::fit_conditional_model(hs, s2, row->spec, anchor);
    const contours::FittedConditional cl(model);
    auto c = contours::iform_contour(ml, cl, cfg.design_period, sample.n_an, cfg.contour_points);
    if (automatic && !c.complete()) {
      log::warn(fmt::format("contour: {} leaves its parameter domain on the contour, skipped",
                            row->spec.label()));
      continue;
    }
    seen.insert(key);
    const auto label = fmt::format("C{}", ++kept);
    csv::write_file(p.contour(label), contours::format_contour(c));
    out.push_back(p.contour(label));
    std::vector<json> se;
    for (double v : model.standard_errors) se.push_back(finite_or_null(v));
    index["contours"].push_back({{"label", label},
                                 {"model", row->spec.label()},
                                 {"as", finite_or_null(row->score.as)},
                                 {"se", finite_or_null(row->score.se)},
                                 {"coefficients", model.coefficients()},
                                 {"standard_errors", se},
                                 {"reflect_anchor", anchor},
                                 {"beta", c.beta},
                                 {"period", c.period},
                                 {"n_an", c.n_an},
                                 {"center", {{"hs", c.center.hs}, {"s2", c.center.s2}}},
                                 {"clamped", c.clamped},
                                 {"complete", c.complete()},
                                 {"file", fs::relative(p.contour(label), p.root).generic_string()}});
  }
  if (kept == 0) throw NumericalError("no conditional model gives a closed contour");
  csv::write_file(p.contours_index(), index.dump(2) + "\n");
  out.push_back(p.contours_index());
  return out;
}

response::CdeGrid load_cde(const fs::path& path) {
  const auto t = csv::read(path);
  const auto a = t.column("hs_lo"), b = t.column("hs_hi"), c = t.column("s2_lo"),
             d = t.column("s2_hi"), v = t.column("value");
  std::vector<double> hs_edges, s2_edges;
  std::vector<std::array<double, 5>> cells;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    cells.push_back({csv::to_double(r[a], t.lines[i]), csv::to_double(r[b], t.lines[i]),
                     csv::to_double(r[c], t.lines[i]), csv::to_double(r[d], t.lines[i]),
                     csv::to_double(r[v], t.lines[i])});
  }
  for (const auto& x : cells) {
    hs_edges.push_back(x[0]);
    hs_edges.push_back(x[1]);
    s2_edges.push_back(x[2]);
    s2_edges.push_back(x[3]);
  }
  auto uniq = [](std::vector<double>& e) {
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
  };
  uniq(hs_edges);
  uniq(s2_edges);
  response::CdeGrid g;
  g.edges.hs = hs_edges;
  g.edges.s2 = s2_edges;
  g.edges.validate();
  if (g.edges.cells() != cells.size())
    throw DataError(fmt::format("{}: cells do not form a rectangular grid", path.string()));
  g.value.assign(cells.size(), 0.0);
  for (const auto& x : cells) {
    const long idx = g.edges.locate({0.5 * (x[0] + x[1]), 0.5 * (x[2] + x[3])});
    if (idx < 0) throw DataError(fmt::format("{}: cell outside the grid", path.string()));
    g.value[static_cast<std::size_t>(idx)] = x[4];
  }
  return g;
}

Outputs run_zeta(const config::RunConfig& cfg, const WorkPaths& p) {
  const auto structures = load_structures(cfg);
  const auto index = load_contour_index(p);
  std::string out = "structure,contour,model,zeta\n";
  for (const auto& st : structures.specs) {
    const auto grid = load_cde(p.cde(st.name));
    for (const auto& e : index) {
      const auto c = load_contour(p, e.label);
      out += fmt::format("{},{},{},{}\n", st.name, e.label, e.spec.label(),
                         contours::zeta_overlap(c, grid));
    }
  }
  csv::write_file(p.zeta(), out);
  return {p.zeta()};
}

Outputs run_report(const config::RunConfig& cfg, const WorkPaths& p) {
  const auto structures = load_structures(cfg);
  const auto peaks = load_peaks_meta(p.peaks_meta());
  const auto hs_model = marginal_from_json(csv::read_file(p.marginal("hs")));
  const auto s2_model = marginal_from_json(csv::read_file(p.marginal("s2")));
  const auto ht = ht_from_json(csv::read_file(p.ht_fit()));
  const auto contours_json = parse_json(p.contours_index());

  ojson r;
  r["storm_peaks"] = {{"n_peaks", peaks.n_peaks}, {"n_an", peaks.n_an}, {"years", peaks.years}};
  auto gpd_json = [](const marginal::MarginalModel& m) {
    const auto& g = m.gpd();
    return ojson{{"u", g.u},       {"p_u", g.p_u},           {"sigma", g.sigma},
                 {"xi", g.xi},     {"se_sigma", finite_or_null(g.se_sigma)},
                 {"se_xi", finite_or_null(g.se_xi)}, {"n_exc", g.n_exc}};
  };
  r["marginal"] = {{"hs", gpd_json(hs_model)}, {"s2", gpd_json(s2_model)}};
  r["conditional_extremes"] = {{"alpha", ht.alpha},
                               {"beta", ht.beta},
                               {"se_alpha", finite_or_null(ht.se_alpha)},
                               {"se_beta", finite_or_null(ht.se_beta)},
                               {"v", ht.v},
                               {"n_exc", ht.n_exc}};
  r["wave_model"] = {{"jonswap_gamma", cfg.jonswap.gamma},
                     {"jonswap_r", cfg.jonswap.r},
                     {"crests_per_cell", cfg.crests},
                     {"epsilon", cfg.epsilon},
                     {"sea_state_hours", cfg.hours}};
  r["design_period"] = cfg.design_period;

  const auto zeta_table = csv::read(p.zeta());
  const auto zs = zeta_table.column("structure"), zc = zeta_table.column("contour"),
             zz = zeta_table.column("zeta");
  std::map<std::pair<std::string, std::string>, double> zeta;
  for (std::size_t i = 0; i < zeta_table.rows.size(); ++i)
    zeta[{zeta_table.rows[i][zs], zeta_table.rows[i][zc]}] =
        csv::to_double(zeta_table.rows[i][zz], zeta_table.lines[i]);

  r["structures"] = ojson::array();
  for (const auto& st : structures.specs) {
    ojson s;
    s["name"] = st.name;
    const auto rv = csv::read(p.return_values(st.name));
    s["return_values"] = ojson::array();
    for (std::size_t i = 0; i < rv.rows.size(); ++i)
      s["return_values"].push_back({{"P", csv::to_double(rv.rows[i][0], rv.lines[i])},
                                    {"r_P", csv::to_double(rv.rows[i][1], rv.lines[i])}});
    const auto cm = parse_json(p.cde_meta(st.name));
    s["r_design"] = cm.at("r_p");
    s["cde_integral"] = cm.at("integral");
    s["zeta"] = ojson::object();
    for (const auto& c : contours_json.at("contours")) {
      const auto label = c.at("label").get<std::string>();
      s["zeta"][label] = zeta.at({st.name, label});
    }
    r["structures"].push_back(s);
  }
  r["contours"] = ojson::array();
  for (const auto& c : contours_json.at("contours"))
    r["contours"].push_back({{"label", c.at("label")},
                             {"model", c.at("model")},
                             {"as", c.at("as")},
                             {"se", c.at("se")},
                             {"beta", c.at("beta")}});
  csv::write_file(p.report_json(), r.dump(2) + "\n");

  std::string txt;
  txt += fmt::format("Storm peaks: {} over {:.2f} years (n_an = {:.3f})\n", peaks.n_peaks,
                     peaks.years, peaks.n_an);
  for (const auto& [name, m] : {std::pair{"hs", &hs_model}, std::pair{"s2", &s2_model}}) {
    const auto& g = m->gpd();
    txt += fmt::format("Marginal {}: u = {:.5g} (p_u = {:.3f}), sigma = {:.5g}, xi = {:.4f}\n", name,
                       g.u, g.p_u, g.sigma, g.xi);
  }
  txt += fmt::format("Conditional extremes: alpha = {:.4f} (se {:.4f}), beta = {:.4f} (se {:.4f})\n",
                     ht.alpha, ht.se_alpha, ht.beta, ht.se_beta);
  txt += fmt::format("JONSWAP: gamma = {}, r = {}; {} crests per cell, epsilon = {}\n",
                     cfg.jonswap.gamma, cfg.jonswap.r, cfg.crests, cfg.epsilon);
  txt += "\nReturn values (base shear, N)\n";
  txt += fmt::format("{:>10}", "P");
  for (const auto& st : structures.specs) txt += fmt::format("{:>16}", st.name);
  txt += "\n";
  for (std::size_t i = 0; i < cfg.periods.size(); ++i) {
    txt += fmt::format("{:>10}", cfg.periods[i]);
    for (const auto& st : r["structures"])
      txt += fmt::format("{:>16.6g}", st["return_values"][i]["r_P"].get<double>());
    txt += "\n";
  }
  txt += fmt::format("\nzeta(P = {}, contour)\n", cfg.design_period);
  txt += fmt::format("{:<8}{:<36}", "Contour", "Model");
  for (const auto& st : structures.specs) txt += fmt::format("{:>10}", st.name);
  txt += "\n";
  for (const auto& c : contours_json.at("contours")) {
    const auto label = c.at("label").get<std::string>();
    txt += fmt::format("{:<8}{:<36}", label, c.at("model").get<std::string>());
    for (const auto& st : structures.specs)
      txt += fmt::format("{:>10.3f}", zeta.at({st.name, label}));
    txt += "\n";
  }
  csv::write_file(p.report_txt(), txt);
  return {p.report_json(), p.report_txt()};
}

template <class E>
[[noreturn]] void rethrow_with_stage(Stage s, const E& e) {
  throw E(fmt::format("stage '{}': {}", to_string(s), e.what()));
}

}  // namespace

StageOutcome Runner::run(Stage stage) {
  manifest::Manifest mf(paths_.root);
  StageOutcome outcome{stage, false, {}};
  try {
    const auto pl = plan(cfg_, paths_, stage);
    const auto hash = config_hash(cfg_, stage, pl);
    if (!options_.force && mf.up_to_date(to_string(stage), hash, pl.inputs)) {
      outcome.skipped = true;
      return outcome;
    }
    if (!options_.force) mf.check_inputs(pl.inputs);
    for (const auto& in : pl.inputs)
      if (!fs::exists(in))
        throw DataError(fmt::format("input {} is missing", in.string()));
    log::info(fmt::format("{}: running", to_string(stage)));
    switch (stage) {
      case Stage::Synth:
        outcome.outputs = run_synth(cfg_);
        break;
      case Stage::Peaks:
        outcome.outputs = run_peaks(cfg_, paths_);
        break;
      case Stage::FitMarginal:
        outcome.outputs = run_fit_marginal(cfg_, paths_);
        break;
      case Stage::FitHt:
        outcome.outputs = run_fit_ht(cfg_, paths_);
        break;
      case Stage::SimulateEnv:
        outcome.outputs = run_simulate(cfg_, paths_);
        break;
      case Stage::Respond:
        outcome.outputs = run_respond(cfg_, paths_);
        break;
      case Stage::Cde:
        outcome.outputs = run_cde(cfg_, paths_);
        break;
      case Stage::Contour:
        outcome.outputs = run_contour(cfg_, paths_);
        break;
      case Stage::Zeta:
        outcome.outputs = run_zeta(cfg_, paths_);
        break;
      case Stage::Report:
        outcome.outputs = run_report(cfg_, paths_);
        break;
    }
    // Inputs are re-listed because the zeta plan depends on contours.json.
    mf.record(to_string(stage), hash, plan(cfg_, paths_, stage).inputs, outcome.outputs);
    mf.save();
  } catch (const ConfigError& e) {
    rethrow_with_stage(stage, e);
  } catch (const DataError& e) {
    rethrow_with_stage(stage, e);
  } catch (const NumericalError& e) {
    rethrow_with_stage(stage, e);
  } catch (const std::invalid_argument& e) {
    rethrow_with_stage(stage, DataError(e.what()));
  }
  return outcome;
}

std::vector<StageOutcome> Runner::run_pipeline() {
  std::vector<StageOutcome> out;
  for (auto s : pipeline_stages(cfg_)) out.push_back(run(s));
  return out;
}

}  // namespace fcde::pipeline
