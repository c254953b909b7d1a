#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fcde/condext.hpp"
#include "fcde/config.hpp"
#include "fcde/contours.hpp"
#include "fcde/marginal.hpp"
#include "fcde/response.hpp"

namespace fcde::pipeline {

enum class Stage {
  Synth,
  Peaks,
  FitMarginal,
  FitHt,
  SimulateEnv,
  Respond,
  Cde,
  Contour,
  Zeta,
  Report
};

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

/// Stages of `fcde pipeline`, in order; synth is included when enabled in the config.
std::vector<Stage> pipeline_stages(const config::RunConfig& cfg);

/// Artifact locations under the work directory.
struct WorkPaths {
  std::filesystem::path root;

  std::filesystem::path peaks() const { return root / "peaks.csv"; }
  std::filesystem::path peaks_meta() const { return root / "peaks_meta.json"; }
  std::filesystem::path marginal(const std::string& var) const {
    return root / ("marginal_" + var + ".json");
  }
  std::filesystem::path diagnostics(const std::string& var) const {
    return root / ("diagnostics_" + var + ".csv");
  }
  std::filesystem::path ht_fit() const { return root / "ht_fit.json"; }
  std::filesystem::path env_sample() const { return root / "env_sample.csv"; }
  std::filesystem::path density_grid() const { return root / "density_grid.csv"; }
  std::filesystem::path env_meta() const { return root / "env_meta.json"; }
  std::filesystem::path structure_dir(const std::string& s) const { return root / s; }
  std::filesystem::path responses(const std::string& s) const { return root / s / "responses.csv"; }
  std::filesystem::path rs_cdf(const std::string& s) const { return root / s / "rs_cdf.csv"; }
  std::filesystem::path return_values(const std::string& s) const {
    return root / s / "return_values.csv";
  }
  std::filesystem::path cde(const std::string& s) const { return root / s / "cde.csv"; }
  std::filesystem::path cde_meta(const std::string& s) const { return root / s / "cde_meta.json"; }
  std::filesystem::path exceedance_map(const std::string& s) const {
    return root / s / "exceedance_map.csv";
  }
  std::filesystem::path frontier(const std::string& s) const { return root / s / "frontier.csv"; }
  std::filesystem::path zoo() const { return root / "model_zoo.csv"; }
  std::filesystem::path contours_index() const { return root / "contours.json"; }
  std::filesystem::path contour(const std::string& label) const {
    return root / "contours" / (label + ".csv");
  }
  std::filesystem::path zeta() const { return root / "zeta.csv"; }
  std::filesystem::path report_json() const { return root / "report.json"; }
  std::filesystem::path report_txt() const { return root / "report.txt"; }
};

// Serialized models.
std::string marginal_to_json(const marginal::MarginalModel& m, double threshold_quantile);
marginal::MarginalModel marginal_from_json(const std::string& text);
std::string ht_to_json(const condext::HtFit& fit);
condext::HtFit ht_from_json(const std::string& text);

/// Per-cell weighted responses for one structure: rows cell,hs,s2,crest,response,weight.
std::string format_cell_responses(const std::vector<std::vector<response::WeightedResponse>>& cells,
                                  const condext::GridEdges& edges);
/// Inverse of format_cell_responses; cells without rows come back empty.
std::vector<response::WeightedResponseSample> parse_cell_responses(
    const std::string& text, const condext::GridEdges& edges, double epsilon);

/// Contour CSV plus the centre and metadata from contours.json.
contours::Contour parse_contour(const std::string& csv_text);

struct Structures {
  std::vector<response::StructureSpec> specs;
  std::vector<std::filesystem::path> files;  // empty for the built-in references
};
Structures load_structures(const config::RunConfig& cfg);

struct RunOptions {
  bool force = false;
};

struct StageOutcome {
  Stage stage;
  bool skipped = false;
  std::vector<std::filesystem::path> outputs;
};

/// Runs stages against the work directory. Each stage reads only files and
/// records input/output hashes in manifest.json; a stage whose config
/// section, inputs and outputs are unchanged is skipped.
class Runner {
 public:
  Runner(config::RunConfig cfg, RunOptions options = {});

  StageOutcome run(Stage stage);
  std::vector<StageOutcome> run_pipeline();

  const config::RunConfig& config() const { return cfg_; }
  const WorkPaths& paths() const { return paths_; }

 private:
  config::RunConfig cfg_;
  RunOptions options_;
  WorkPaths paths_;
};

}  // namespace fcde::pipeline
