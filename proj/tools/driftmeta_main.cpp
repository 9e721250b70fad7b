#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "driftmeta/checkpoint.hpp"
#include "driftmeta/config.hpp"
#include "driftmeta/errors.hpp"
#include "driftmeta/io.hpp"
#include "driftmeta/runner.hpp"

namespace {

using namespace driftmeta;

void cmd_generate(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig cfg = load_config_file(config_path);
  if (!cfg.scenario)
    throw ConfigError("generate needs a scenario config, not a stream_csv");

  std::filesystem::create_directories(out_dir);
  const DriftScenario sc = build_scenario(*cfg.scenario, cfg.seed);
  const GeneratedStream gs = generate_stream(sc, cfg.scenario->dates,
                                             cfg.scenario->symbols,
                                             cfg.scenario->features);
  write_stream_csv(gs.days, out_dir + "/stream.csv");
  write_regime_log_csv(gs.regime_log, out_dir + "/regimes.csv");
  std::printf("wrote %s/stream.csv (%d dates x %d symbols) and %s/regimes.csv\n",
              out_dir.c_str(), cfg.scenario->dates, cfg.scenario->symbols,
              out_dir.c_str());
}

void cmd_run(const std::string& config_path, const std::string& out_dir,
             const std::string& method_override, bool resume, bool force) {
  ExperimentConfig cfg = load_config_file(config_path);
  if (!method_override.empty())
    cfg.method = parse_method_name(method_override);

  const RunArtifacts art{out_dir, resume, force};
  const RunReport report = run_experiment(cfg, &art);

  std::printf("method=%s test_tasks=%d ic=%.4f ric=%.4f ear=%.4f\n",
              method_name(report.method).c_str(), report.test_tasks,
              report.ic.ic, report.ic.ric, report.portfolio.ear);
  if (report.method == Method::MetaDa)
    std::printf("selection: %d accepted of %d opportunities\n",
                report.selections_accepted, report.selection_opportunities);
  std::printf("report: %s/report.json\n", out_dir.c_str());
}

void cmd_ablate(const std::string& config_path, const std::string& out_dir,
                int seeds, int jobs) {
  const ExperimentConfig base = load_config_file(config_path);

  std::vector<ExperimentConfig> configs;
  for (Method m : {Method::Il, Method::MetaIl, Method::MetaDa}) {
    ExperimentConfig c = base;
    c.method = m;
    configs.push_back(std::move(c));
  }

  const AblationResult result = run_ablation(configs, seeds, jobs);

  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir + "/ablation.csv", ablation_csv(result));
  write_file_atomic(out_dir + "/ranks.json", ranks_json(result));

  for (size_t m = 0; m < result.methods.size(); ++m) {
    std::printf("%-8s rank=%.2f", result.methods[m].c_str(),
                result.friedman.avg_ranks[m]);
    for (size_t s = 0; s < result.scenarios.size(); ++s)
      std::printf("  %s median_ic=%.4f", result.scenarios[s].c_str(),
                  result.cells[m * result.scenarios.size() + s].median_ic);
    std::printf("\n");
  }
  std::printf("friedman_chi_square=%.4f\n", result.friedman.chi_square);
  std::printf("wrote %s/ablation.csv and %s/ranks.json\n", out_dir.c_str(),
              out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental trend forecasting under concept drift"};
  app.require_subcommand(1);

  std::string config_path, out_dir, method_override;
  bool resume = false, force = false;
  int seeds = 5, jobs = 1;

  CLI::App* gen = app.add_subcommand(
      "generate", "write a synthetic stream CSV and its regime log");
  gen->add_option("--config", config_path, "experiment config JSON")
      ->required();
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* run =
      app.add_subcommand("run", "run the three-stage experiment end to end");
  run->add_option("--config", config_path, "experiment config JSON")
      ->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--method", method_override,
                  "il|meta-il|meta-da, overrides the config");
  run->add_flag("--resume", resume,
                "reuse stage checkpoints already present in --out");
  run->add_flag("--force", force,
                "accept checkpoints written under a different config");

  CLI::App* abl = app.add_subcommand(
      "ablate", "compare il, meta-il and meta-da on the config's scenario");
  abl->add_option("--config", config_path, "experiment config JSON")
      ->required();
  abl->add_option("--out", out_dir, "output directory")->required();
  abl->add_option("--seeds", seeds, "runs per method (default 5)");
  abl->add_option("--jobs", jobs, "parallel workers (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);  // prints the message or the help text
    return rc == 0 ? 0 : 2;     // usage problems follow the config exit code
  }

  try {
    if (gen->parsed()) {
      cmd_generate(config_path, out_dir);
    } else if (run->parsed()) {
      cmd_run(config_path, out_dir, method_override, resume, force);
    } else {
      cmd_ablate(config_path, out_dir, seeds, jobs);
    }
  } catch (const ConfigError& e) {
    log::error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 1;
  }
  return 0;
}
