// Command-line driver: one subcommand per pipeline stage plus `pipeline`.
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fcde/config.hpp"
#include "fcde/errors.hpp"
#include "fcde/log.hpp"
#include "fcde/parallel.hpp"
#include "fcde/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumerical = 4 };

void report(const fcde::pipeline::StageOutcome& o) {
  if (o.skipped)
    fmt::print("{}: up to date\n", fcde::pipeline::to_string(o.stage));
  else
    fmt::print("{}: wrote {} file(s)\n", fcde::pipeline::to_string(o.stage), o.outputs.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward-model extreme response, conditional environment density and IFORM "
               "contour diagnostics"};
  app.require_subcommand(1);
  std::string config_path = "fcde.ini";
  std::uint64_t seed = 0;
  bool force = false;
  std::size_t threads = 0;
  std::string log_level;
  app.add_option("-c,--config", config_path, "INI configuration file")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides [seeds] master)");
  app.add_flag("--force", force, "Rerun stages and accept inputs with stale hashes");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (overrides [cli] threads)")
                          ->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "quiet, warn or info")
      ->check(CLI::IsMember({"quiet", "warn", "info"}));

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"synth", "Generate a synthetic hindcast and its ground-truth sidecar"},
      {"peaks", "Extract storm peaks (hs, s2) from the hindcast"},
      {"fit-marginal", "Fit the semiparametric marginal models and threshold diagnostics"},
      {"fit-ht", "Fit the conditional extremes dependence model"},
      {"simulate-env", "Simulate the environment and grid its density"},
      {"respond", "Simulate per-cell structural responses and return values"},
      {"cde", "Conditional density of the environment given the design response"},
      {"contour", "Rank conditional models and construct IFORM contours"},
      {"zeta", "Overlap of each contour with each structure's conditional density"},
      {"report", "Summary report"},
      {"pipeline", "Run every stage in order, skipping those that are up to date"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    auto cfg = fcde::config::load_config(config_path);
    if (seed_opt->count() > 0) cfg.master_seed = seed;
    if (threads_opt->count() > 0) cfg.threads = threads;
    if (!log_level.empty()) cfg.log_level = log_level;
    fcde::log::set_level(cfg.log_level == "quiet"  ? fcde::log::Level::Quiet
                         : cfg.log_level == "info" ? fcde::log::Level::Info
                                                   : fcde::log::Level::Warn);
    fcde::set_default_threads(cfg.threads);

    fcde::pipeline::Runner runner(cfg, {force});
    const auto* sub = app.get_subcommands().front();
    if (sub->get_name() == "pipeline") {
      for (const auto& o : runner.run_pipeline()) report(o);
    } else {
      report(runner.run(fcde::pipeline::stage_from_string(sub->get_name())));
    }
    return kOk;
  } catch (const fcde::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const fcde::DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const fcde::NumericalError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kOther;
  }
}
