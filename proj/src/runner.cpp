#include "driftmeta/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "driftmeta/checkpoint.hpp"
#include "driftmeta/errors.hpp"
#include "driftmeta/io.hpp"
#include "driftmeta/rng.hpp"

namespace driftmeta {

namespace {

using nlohmann::json;

// Re-tags any failure with the stage it happened in, keeping the exit-code
// contract simple: config problems surface before stages begin.
template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error(std::string(name) + ": " + e.what());
  }
}

std::vector<DayBatch> load_days(const ExperimentConfig& cfg) {
  if (cfg.scenario) {
    const DriftScenario sc = build_scenario(*cfg.scenario, cfg.seed);
    return generate_stream(sc, cfg.scenario->dates, cfg.scenario->symbols,
                           cfg.scenario->features)
        .days;
  }
  return load_stream_csv(cfg.stream_csv);
}

MetaConfig meta_config(const ExperimentConfig& cfg) {
  MetaConfig m;
  m.eta = cfg.eta;
  m.eta_a = cfg.eta_a;
  m.use_adapters = cfg.method != Method::Il;
  m.patience = cfg.patience;
  m.max_epochs = cfg.max_epochs;
  return m;
}

ModelState initial_state(const ExperimentConfig& cfg, int d) {
  Rng frng = derive_rng(cfg.seed, "init/forecaster");
  Forecaster f = cfg.arch == Arch::Mlp
                     ? Forecaster::init_mlp(d, cfg.hidden, cfg.q, frng)
                     : Forecaster::init_recurrent(d, cfg.q, cfg.steps, frng);
  Rng arng = derive_rng(cfg.seed, "init/adapters");
  AdapterParams a = AdapterParams::init(cfg.n_proj, d, cfg.omega, arng);
  return ModelState::init(std::move(f), std::move(a), meta_config(cfg));
}

TaskInferConfig inference_config(const ExperimentConfig& cfg) {
  TaskInferConfig t;
  t.p = cfg.p;
  t.lookback = cfg.lookback;
  t.kappa = cfg.kappa;
  t.gamma = cfg.gamma;
  t.eta_t = cfg.eta_t;
  t.patience = cfg.patience;
  t.max_epochs = cfg.max_epochs;
  return t;
}

// date value -> position in the backing stream
std::unordered_map<int, int> position_index(const std::vector<DayBatch>& days) {
  std::unordered_map<int, int> pos;
  pos.reserve(days.size());
  for (size_t i = 0; i < days.size(); ++i)
    pos.emplace(days[i].date, static_cast<int>(i));
  return pos;
}

// Rebuilds a task through the guarded view. Train labels are read under the
// current horizon (they predate the test window, so a throw here means a
// segmentation bug); test labels are left out until the caller advances the
// horizon and fills them.
Task guarded_task(const StreamView& view,
                  const std::unordered_map<int, int>& pos, const Task& t) {
  Task g;
  g.index = t.index;
  g.history = t.history;
  for (const DayBatch& day : t.train) {
    DayBatch d = view.day(pos.at(day.date));
    d.labels = view.labels(pos.at(day.date));
    g.train.push_back(std::move(d));
  }
  for (const DayBatch& day : t.test) {
    DayBatch d = view.day(pos.at(day.date));
    d.labels.reset();
    g.test.push_back(std::move(d));
  }
  return g;
}

struct StageThree {
  std::vector<TaskOutcome> outcomes;  // test tasks only
  std::vector<DailyEval> daily;
  std::vector<double> topk_daily;
  std::vector<double> task_seconds;
  int opportunities = 0;
  int accepted = 0;
  std::vector<MemoryEntry> memory;  // final contents (meta-da)
  IcSummary ic;
  PortfolioSummary portfolio;
  double mean_online_loss = 0.0;
};

// Warm-up over the validation tasks, then the guarded evaluation walk over
// the test tasks. The StreamView horizon makes any premature label read
// throw: predictions happen with the horizon at the test window start, the
// online update and scoring only after it advances past the window.
StageThree run_stage3(const ExperimentConfig& cfg, ModelState state,
                      const TaskInferParams* pi, const ModelState* theta0,
                      const SplitTasks& split,
                      const std::vector<Task>& universe,
                      const std::vector<DayBatch>& days) {
  StageThree out;
  StreamView view(&days);
  const auto pos = position_index(days);

  const bool use_inference = cfg.method == Method::MetaDa;
  SampleEmbeddingCache frozen(use_inference ? theta0 : nullptr);
  WalkState walk{Memory(cfg.kappa), {}};
  if (use_inference) seed_walk(walk, frozen, *pi, split.train);

  std::vector<int> dates;
  std::vector<Vector> scores, trends;
  double loss_acc = 0.0;

  auto walk_task = [&](const Task& task, bool evaluate) {
    const int start = pos.at(task.test.front().date);
    const int end = pos.at(task.test.back().date) + 1;

    view.set_label_horizon(start);
    Task g = guarded_task(view, pos, task);

    const auto t0 = std::chrono::steady_clock::now();
    std::optional<TaskStep> inf_step;
    std::optional<CycleStep> plain_step;
    if (use_inference) {
      inf_step = begin_task(state, frozen, *pi, walk, g, universe);
      ++out.opportunities;
      if (inf_step->selected) {
        ++out.accepted;
        // memory only ever holds strictly earlier tasks
        if (*inf_step->selected >= task.index)
          throw ValueError("selection returned a non-past task");
      }
    } else {
      plain_step = begin_cycle(state, g);
    }

    view.set_label_horizon(end);
    for (DayBatch& d : g.test) d.labels = view.labels(pos.at(d.date));

    TaskOutcome o;
    if (use_inference) {
      o = finish_task(state, *inf_step, g);
    } else {
      TaskRunStats s = finish_cycle(state, *plain_step, g);
      o.task = g.index;
      o.ic = s.ic;
      o.loss = s.loss;
      o.predictions = std::move(s.predictions);
    }
    const auto t1 = std::chrono::steady_clock::now();

    if (evaluate) {
      out.task_seconds.push_back(
          std::chrono::duration<double>(t1 - t0).count());
      loss_acc += o.loss;
      for (size_t j = 0; j < g.test.size(); ++j) {
        dates.push_back(g.test[j].date);
        scores.push_back(o.predictions[j]);
        trends.push_back(*g.test[j].labels);
      }
      out.outcomes.push_back(std::move(o));
    }
  };

  for (const Task& t : split.val) walk_task(t, false);
  for (const Task& t : split.test) walk_task(t, true);

  out.daily = ic_series(dates, scores, trends);
  out.ic = summarize_ic(out.daily);
  out.portfolio = topk_portfolio(dates, scores, trends, cfg.topk);
  out.topk_daily = out.portfolio.daily_excess;
  out.mean_online_loss = loss_acc / static_cast<double>(out.outcomes.size());
  if (use_inference) out.memory = walk.memory.entries();
  return out;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string daily_csv(const RunReport& r) {
  std::string out = "date,ic,ric,topk_return\n";
  for (size_t i = 0; i < r.daily.size(); ++i) {
    out += std::to_string(r.daily[i].date);
    out += ',';
    if (r.daily[i].ic) out += format_double(*r.daily[i].ic);
    out += ',';
    if (r.daily[i].ric) out += format_double(*r.daily[i].ric);
    out += ',';
    out += format_double(r.topk_daily[i]);
    out += '\n';
  }
  return out;
}

std::string train_log_csv(const std::vector<EpochLogRow>& rows) {
  std::string out = "epoch,task,phase,loss,ic\n";
  for (const EpochLogRow& r : rows) {
    out += std::to_string(r.epoch);
    out += ',';
    if (r.task >= 0) out += std::to_string(r.task);
    out += ',';
    out += r.phase;
    out += ',';
    if (std::isfinite(r.loss)) out += format_double(r.loss);
    out += ',';
    if (std::isfinite(r.ic)) out += format_double(r.ic);
    out += '\n';
  }
  return out;
}

std::string timing_csv(const RunReport& r) {
  std::string out = "task,seconds\n";
  for (size_t i = 0; i < r.task_seconds.size(); ++i) {
    out += std::to_string(r.outcomes[i].task);
    out += ',';
    out += format_double(r.task_seconds[i]);
    out += '\n';
  }
  return out;
}

std::string scenario_label(const ExperimentConfig& cfg) {
  if (!cfg.scenario) return cfg.stream_csv;
  switch (cfg.scenario->kind) {
    case ScenarioKind::RecurringCycle: return "recurring-cycle";
    case ScenarioKind::RandomWalk: return "random-walk";
    case ScenarioKind::Mixed: return "mixed";
  }
  throw ValueError("bad scenario kind");
}

}  // namespace

SplitTasks split_tasks(const std::vector<Task>& tasks, const SplitBounds& b) {
  SplitTasks s;
  for (const Task& t : tasks) {
    const int start = t.test.front().date;
    if (start < b.train_end) s.train.push_back(t);
    else if (start < b.val_end) s.val.push_back(t);
    else s.test.push_back(t);
  }
  const auto need = [](const std::vector<Task>& v, const char* name) {
    if (v.size() < 2)
      throw ConfigError(std::string("split: ") + name + " has " +
                        std::to_string(v.size()) + " tasks, need at least 2");
  };
  need(s.train, "train");
  need(s.val, "val");
  need(s.test, "test");
  return s;
}

std::string report_json(const RunReport& r) {
  json j;
  j["config_hash"] = hash_hex(r.config_hash);
  j["method"] = method_name(r.method);
  j["tasks"] = {{"train", r.train_tasks},
                {"val", r.val_tasks},
                {"test", r.test_tasks}};
  json metrics;
  metrics["ic"] = r.ic.ic;
  metrics["ric"] = r.ic.ric;
  metrics["icir"] = r.ic.icir ? json(*r.ic.icir) : json(nullptr);
  metrics["ricir"] = r.ic.ricir ? json(*r.ic.ricir) : json(nullptr);
  metrics["days"] = r.ic.days;
  metrics["days_ic_undefined"] = r.ic.days_ic_undefined;
  metrics["days_ric_undefined"] = r.ic.days_ric_undefined;
  metrics["ear"] = r.portfolio.ear;
  metrics["earir"] = r.portfolio.earir ? json(*r.portfolio.earir) : json(nullptr);
  metrics["portfolio"] = "topk-simplified";
  metrics["excess_baseline"] = "equal-weight universe mean";
  j["metrics"] = metrics;
  j["selection"] = {{"opportunities", r.selection_opportunities},
                    {"accepted", r.selections_accepted}};
  j["mean_online_loss"] = r.mean_online_loss;
  json per_task = json::array();
  for (const TaskOutcome& o : r.outcomes) {
    per_task.push_back({{"task", o.task},
                        {"ic", o.ic},
                        {"loss", o.loss},
                        {"selected", o.selected ? json(*o.selected) : json(nullptr)}});
  }
  j["per_task"] = per_task;
  return j.dump(2) + "\n";
}

RunReport run_experiment(const ExperimentConfig& cfg,
                         const RunArtifacts* artifacts) {
  namespace fs = std::filesystem;
  const uint64_t hash = config_hash(cfg);
  const std::string dir = artifacts ? artifacts->dir : "";
  if (artifacts) fs::create_directories(dir);

  const std::vector<DayBatch> days = stage("data", [&] { return load_days(cfg); });
  const int d = static_cast<int>(days.front().features.cols());
  if (cfg.arch == Arch::Recurrent && d % cfg.steps != 0)
    throw ConfigError("model/steps must divide the stream's feature count");

  const std::vector<Task> tasks = segment_tasks(days, cfg.t_ada);
  const SplitTasks split = split_tasks(tasks, cfg.split);

  RunReport report;
  report.config_hash = hash;
  report.method = cfg.method;
  report.train_tasks = static_cast<int>(split.train.size());
  report.val_tasks = static_cast<int>(split.val.size());
  report.test_tasks = static_cast<int>(split.test.size());

  const ModelState start = initial_state(cfg, d);
  const std::string model_path = dir + "/model_stage1.ckpt";
  const std::string pi_path = dir + "/taskinfer_stage2.ckpt";

  // stage 1: train the forecaster, or restore it
  ModelState theta0 = start;
  bool stage1_trained = false;
  if (artifacts && artifacts->resume && fs::exists(model_path)) {
    stage("stage1", [&] {
      unpack_model(load_checkpoint(model_path, hash, artifacts->force), &theta0);
      return 0;
    });
  } else {
    TrainForecasterResult s1 = stage("stage1", [&] {
      return train_forecaster(start, split.train, split.val, meta_config(cfg));
    });
    theta0 = std::move(s1.model);
    report.stage1_best_epoch = s1.best_epoch;
    report.stage1_epochs = s1.epochs_run;
    report.train_log = std::move(s1.log);
    stage1_trained = true;
    if (artifacts) save_checkpoint(pack_model(theta0, hash), model_path);
  }

  // stage 2: task inference on the frozen model (meta-da only)
  TaskInferParams pi;
  if (cfg.method == Method::MetaDa) {
    if (artifacts && artifacts->resume && fs::exists(pi_path)) {
      stage("stage2", [&] {
        Rng rng = derive_rng(cfg.seed, "init/taskinfer");
        pi.pi1 = EmbeddingParams::init(cfg.q, cfg.p, rng);
        pi.pi2 = InferenceNet::init(cfg.q, cfg.lookback, rng);
        pi.kappa = cfg.kappa;
        pi.gamma = cfg.gamma;
        unpack_inference(load_checkpoint(pi_path, hash, artifacts->force), &pi);
        return 0;
      });
    } else {
      TrainInferenceResult s2 = stage("stage2", [&] {
        return train_inference(theta0, split.train, split.val, tasks,
                               inference_config(cfg),
                               derive_seed(cfg.seed, "init/taskinfer"));
      });
      pi = std::move(s2.pi);
      report.stage2_best_epoch = s2.best_epoch;
      report.stage2_epochs = s2.epochs_run;
      if (stage1_trained) {
        for (size_t e = 0; e < s2.train_loss_by_epoch.size(); ++e) {
          report.train_log.push_back({static_cast<int>(e) + 1, -1, "ti-train",
                                      s2.train_loss_by_epoch[e], NAN});
          report.train_log.push_back({static_cast<int>(e) + 1, -1, "ti-val",
                                      NAN, s2.val_ic_by_epoch[e]});
        }
      }
      if (artifacts) save_checkpoint(pack_inference(pi, hash), pi_path);
    }
  }

  // stage 3: warm-up walk over validation, guarded walk over test
  StageThree s3 = stage("stage3", [&] {
    return run_stage3(cfg, theta0,
                      cfg.method == Method::MetaDa ? &pi : nullptr, &theta0,
                      split, tasks, days);
  });

  report.ic = s3.ic;
  report.portfolio = s3.portfolio;
  report.mean_online_loss = s3.mean_online_loss;
  report.selection_opportunities = s3.opportunities;
  report.selections_accepted = s3.accepted;
  report.outcomes = std::move(s3.outcomes);
  report.daily = std::move(s3.daily);
  report.topk_daily = std::move(s3.topk_daily);
  report.task_seconds = std::move(s3.task_seconds);

  if (artifacts) {
    write_file_atomic(dir + "/report.json", report_json(report));
    write_file_atomic(dir + "/daily.csv", daily_csv(report));
    if (stage1_trained)
      write_file_atomic(dir + "/train_log.csv", train_log_csv(report.train_log));
    write_file_atomic(dir + "/timing.csv", timing_csv(report));
    if (cfg.method == Method::MetaDa)
      write_embeddings_csv(s3.memory, dir + "/memory_embeddings.csv");
  }
  return report;
}

AblationResult run_ablation(const std::vector<ExperimentConfig>& configs,
                            int seeds, int jobs) {
  if (configs.empty()) throw ValueError("run_ablation: no configs");
  if (seeds < 1) throw ValueError("run_ablation: seeds must be >= 1");
  if (jobs < 1) jobs = 1;

  AblationResult out;
  std::vector<std::pair<size_t, size_t>> cell_of;  // (row, col) per config
  for (const ExperimentConfig& cfg : configs) {
    const std::string m = method_name(cfg.method);
    const std::string s = scenario_label(cfg);
    size_t mi = std::find(out.methods.begin(), out.methods.end(), m) -
                out.methods.begin();
    if (mi == out.methods.size()) out.methods.push_back(m);
    size_t si = std::find(out.scenarios.begin(), out.scenarios.end(), s) -
                out.scenarios.begin();
    if (si == out.scenarios.size()) out.scenarios.push_back(s);
    cell_of.emplace_back(mi, si);
  }
  const size_t rows = out.methods.size(), cols = out.scenarios.size();
  if (configs.size() != rows * cols)
    throw ValueError("run_ablation: configs must form a full method x "
                     "scenario grid");
  std::vector<int> seen(rows * cols, 0);
  for (const auto& [mi, si] : cell_of) {
    if (seen[mi * cols + si]++)
      throw ValueError("run_ablation: duplicate method/scenario cell");
  }

  // expand into runs; every method sees the same stream per seed index
  struct RunSpec {
    size_t config;
    int seed_offset;
  };
  std::vector<RunSpec> runs;
  for (size_t c = 0; c < configs.size(); ++c)
    for (int s = 0; s < seeds; ++s) runs.push_back({c, s});

  std::vector<RunReport> reports(runs.size());
  std::mutex mu;
  size_t next = 0;
  auto worker = [&] {
    for (;;) {
      size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next == runs.size()) return;
        i = next++;
      }
      ExperimentConfig cfg = configs[runs[i].config];
      cfg.seed += static_cast<uint64_t>(runs[i].seed_offset);
      reports[i] = run_experiment(cfg);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // fold runs into cells, row-major
  out.cells.resize(rows * cols);
  for (size_t i = 0; i < runs.size(); ++i) {
    const auto [mi, si] = cell_of[runs[i].config];
    AblationCell& cell = out.cells[mi * cols + si];
    cell.ics.push_back(reports[i].ic.ic);
  }
  for (size_t c = 0; c < configs.size(); ++c) {
    const auto [mi, si] = cell_of[c];
    AblationCell& cell = out.cells[mi * cols + si];
    cell.method = configs[c].method;
    cell.scenario = out.scenarios[si];
    cell.median_ic = percentile(cell.ics, 50.0);
    cell.mean_ic = std::accumulate(cell.ics.begin(), cell.ics.end(), 0.0) /
                   static_cast<double>(cell.ics.size());
    std::vector<double> rics, ears;
    for (size_t i = 0; i < runs.size(); ++i) {
      if (runs[i].config == c) {
        rics.push_back(reports[i].ic.ric);
        ears.push_back(reports[i].portfolio.ear);
      }
    }
    cell.median_ric = percentile(rics, 50.0);
    cell.median_ear = percentile(ears, 50.0);
  }

  // ranks over the median-IC table; the textbook statistic needs a 2x2 or
  // larger table, smaller ones get the same ranking computed directly
  std::vector<std::vector<double>> table(rows, std::vector<double>(cols));
  for (size_t m = 0; m < rows; ++m)
    for (size_t s = 0; s < cols; ++s)
      table[m][s] = out.cells[m * cols + s].median_ic;
  if (rows >= 2 && cols >= 2) {
    out.friedman = friedman_ranks(table);
  } else {
    out.friedman.avg_ranks.assign(rows, 0.0);
    for (size_t s = 0; s < cols; ++s) {
      Vector col(static_cast<Eigen::Index>(rows));
      for (size_t m = 0; m < rows; ++m)
        col(static_cast<Eigen::Index>(m)) = -table[m][s];
      const auto ranks = average_ranks(col);
      for (size_t m = 0; m < rows; ++m) out.friedman.avg_ranks[m] += ranks[m];
    }
    for (double& r : out.friedman.avg_ranks) r /= static_cast<double>(cols);
    double acc = 0.0;
    for (double r : out.friedman.avg_ranks) {
      const double dlt = r - (static_cast<double>(rows) + 1.0) / 2.0;
      acc += dlt * dlt;
    }
    out.friedman.chi_square = 12.0 * static_cast<double>(cols) /
                              (static_cast<double>(rows) *
                               (static_cast<double>(rows) + 1.0)) *
                              acc;
  }
  return out;
}

std::string ablation_csv(const AblationResult& r) {
  std::string out = "method,scenario,runs,median_ic,mean_ic,median_ric,median_ear\n";
  for (const AblationCell& c : r.cells) {
    out += method_name(c.method);
    out += ',';
    out += c.scenario;
    out += ',';
    out += std::to_string(c.ics.size());
    out += ',';
    out += format_double(c.median_ic);
    out += ',';
    out += format_double(c.mean_ic);
    out += ',';
    out += format_double(c.median_ric);
    out += ',';
    out += format_double(c.median_ear);
    out += '\n';
  }
  return out;
}

std::string ranks_json(const AblationResult& r) {
  json j;
  j["methods"] = r.methods;
  j["scenarios"] = r.scenarios;
  const size_t cols = r.scenarios.size();
  json table = json::array();
  for (size_t m = 0; m < r.methods.size(); ++m) {
    json row = json::array();
    for (size_t s = 0; s < cols; ++s)
      row.push_back(r.cells[m * cols + s].median_ic);
    table.push_back(row);
  }
  j["median_ic"] = table;
  j["avg_ranks"] = r.friedman.avg_ranks;
  j["friedman_chi_square"] = r.friedman.chi_square;
  return j.dump(2) + "\n";
}

}  // namespace driftmeta
