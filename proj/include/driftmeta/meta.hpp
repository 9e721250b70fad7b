#pragma once

#include <functional>
#include <string>
#include <vector>

#include "driftmeta/adapters.hpp"
#include "driftmeta/models.hpp"
#include "driftmeta/optim.hpp"
#include "driftmeta/stream.hpp"

namespace driftmeta {

struct MetaConfig {
  double eta = 1e-3;    // forecaster rate: inner step and online Adam
  double eta_a = 1e-2;  // adapter rate
  bool use_adapters = true;
  int patience = 5;
  int max_epochs = 50;
};

// Everything that evolves while the model walks the stream: parameters of
// the forecaster and both adapters plus their Adam accumulators. Copying the
// struct is a full snapshot, optimizer state included.
struct ModelState {
  Forecaster forecaster;
  AdapterParams adapters;
  bool use_adapters = true;
  double eta = 1e-3;
  double eta_a = 1e-2;
  Adam opt_f;
  Adam opt_ad;

  static ModelState init(Forecaster f, AdapterParams a,
                         const MetaConfig& cfg);
};

// Labeled pool feeding one adaptation step: the current task's train window,
// optionally joined by the train window of a recurring historical task.
struct AdaptationSet {
  Matrix x;
  Vector y;
  bool includes_history = false;
  int history_task = -1;
};

AdaptationSet make_adaptation_set(const Task& current,
                                  const Task* historical = nullptr);

// One plain SGD step of size eta on the forecaster against the adapted pool;
// adapters are read, never written. Returns the adapted copy.
Forecaster adapt_step(const ModelState& state, const AdaptationSet& pool);

// Scores for one feature matrix through adapters, adapted forecaster, and
// the inverse label map.
Vector predict_scores(const ModelState& state, const Forecaster& adapted,
                      const Matrix& x);
// Per-date scores over a test window.
std::vector<Vector> predict_task(const ModelState& state,
                                 const Forecaster& adapted,
                                 const std::vector<DayBatch>& days);

// Mean of the defined daily ICs over a test window; 0 when no day has a
// defined correlation (degenerate cross-sections only).
double window_ic(const std::vector<DayBatch>& days,
                 const std::vector<Vector>& preds);

// Online update once the window's labels are realized. Gradients are taken
// at the adapted parameters but applied to the held (pre-adaptation) ones:
// forecaster via its own Adam at eta, adapters via theirs at eta_a. Returns
// the loss that was stepped on.
double online_step(ModelState& state, const Matrix& x, const Vector& y,
                   const Forecaster& adapted);

struct EpochLogRow {
  int epoch = 0;
  int task = 0;
  std::string phase;  // "train" | "val"
  double loss = 0.0;  // online objective for the task
  double ic = 0.0;    // mean daily IC over the task's test window
};

struct TrainForecasterResult {
  ModelState model;  // best-validation snapshot
  std::vector<EpochLogRow> log;
  std::vector<double> val_ic_by_epoch;
  int best_epoch = 0;  // 1-based
  int epochs_run = 0;
};

// Walks a full task sequence once: adapt on the train window, score the test
// window, update online. Returns mean IC per task; predictions optionally
// collected for the caller.
struct TaskRunStats {
  double ic = 0.0;
  double loss = 0.0;
  std::vector<Vector> predictions;
};

// The cycle split at the point where test labels become necessary: begin
// adapts and predicts (train labels only, the test window may be unlabeled),
// finish scores and applies the online update once labels are realized.
struct CycleStep {
  Forecaster adapted;
  std::vector<Vector> predictions;
};
CycleStep begin_cycle(ModelState& state, const Task& task,
                      const Task* historical = nullptr);
TaskRunStats finish_cycle(ModelState& state, const CycleStep& step,
                          const Task& labeled);

// begin_cycle + finish_cycle on a fully labeled task.
TaskRunStats run_task_cycle(ModelState& state, const Task& task,
                            const Task* historical = nullptr);

// Stage-one training: per epoch, learn every training task in order, stash
// the parameters, measure the same protocol on the validation tasks, then
// restore. Keeps the snapshot with the best validation IC and stops after
// `patience` consecutive epochs without improvement.
TrainForecasterResult train_forecaster(
    const ModelState& start, const std::vector<Task>& train_tasks,
    const std::vector<Task>& val_tasks, const MetaConfig& cfg,
    const std::function<void(int, const ModelState&)>& epoch_hook = {});

}  // namespace driftmeta
