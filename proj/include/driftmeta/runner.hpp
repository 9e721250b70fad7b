#pragma once

#include <optional>
#include <string>
#include <vector>

#include "driftmeta/config.hpp"
#include "driftmeta/meta.hpp"
#include "driftmeta/metrics.hpp"
#include "driftmeta/taskinfer.hpp"

namespace driftmeta {

// A task belongs to the split its test window starts in.
struct SplitTasks {
  std::vector<Task> train, val, test;
};

// Throws ConfigError unless every split ends up with at least two tasks.
SplitTasks split_tasks(const std::vector<Task>& tasks, const SplitBounds& b);

// Everything one experiment produces, minus wall-clock (kept separate so
// reports stay byte-reproducible).
struct RunReport {
  uint64_t config_hash = 0;
  Method method = Method::MetaDa;
  int train_tasks = 0, val_tasks = 0, test_tasks = 0;

  int stage1_best_epoch = 0, stage1_epochs = 0;
  int stage2_best_epoch = 0, stage2_epochs = 0;  // meta-da only

  IcSummary ic;                  // over test dates
  PortfolioSummary portfolio;    // topk-simplified, equal-weight excess
  double mean_online_loss = 0.0;

  int selection_opportunities = 0;  // test+warm-up tasks walked (meta-da)
  int selections_accepted = 0;      // gate passed

  std::vector<TaskOutcome> outcomes;   // per test task
  std::vector<DailyEval> daily;        // per test date
  std::vector<double> topk_daily;      // aligned with `daily`
  std::vector<EpochLogRow> train_log;  // stage 1 rows, then stage 2 rows

  std::vector<double> task_seconds;  // per test task; excluded from report.json
};

std::string report_json(const RunReport& r);

// Where to put files and how to treat existing checkpoints. With `resume`,
// stages whose checkpoint already exists are loaded instead of retrained.
struct RunArtifacts {
  std::string dir;
  bool resume = false;
  bool force = false;
};

// The three-stage procedure: train the forecaster, train task inference on
// the frozen result (meta-da), then walk validation as warm-up and the test
// tasks for evaluation. Pass artifacts to also write report.json, daily.csv,
// train_log.csv, timing.csv and stage checkpoints.
RunReport run_experiment(const ExperimentConfig& cfg,
                         const RunArtifacts* artifacts = nullptr);

// One ablation cell: a method evaluated on one scenario over several seeds.
struct AblationCell {
  Method method = Method::Il;
  std::string scenario;
  std::vector<double> ics;  // per seed, test IC
  double median_ic = 0.0;
  double mean_ic = 0.0;
  double median_ric = 0.0;
  double median_ear = 0.0;
};

struct AblationResult {
  std::vector<std::string> methods;    // row order
  std::vector<std::string> scenarios;  // column order
  std::vector<AblationCell> cells;     // row-major
  FriedmanResult friedman;             // over the median-IC table
};

// Each config names one (method, scenario) cell; every cell is run with
// seeds cfg.seed + 0 .. cfg.seed + seeds-1 so all methods see identical
// streams per seed. The configs must form a full method x scenario grid.
AblationResult run_ablation(const std::vector<ExperimentConfig>& configs,
                            int seeds, int jobs = 1);

std::string ablation_csv(const AblationResult& r);
std::string ranks_json(const AblationResult& r);

}  // namespace driftmeta
