#include "driftmeta/meta.hpp"

#include <cmath>
#include <limits>

#include "driftmeta/bind.hpp"
#include "driftmeta/errors.hpp"
#include "driftmeta/metrics.hpp"

namespace driftmeta {

namespace {

std::vector<ParamRef> forecaster_refs(Forecaster& f) {
  std::vector<ParamRef> out;
  f.visit([&](const std::string& name, Matrix& m) {
    out.push_back({name, &m});
  });
  return out;
}

}  // namespace

double window_ic(const std::vector<DayBatch>& days,
                 const std::vector<Vector>& preds) {
  double acc = 0.0;
  int cnt = 0;
  for (size_t i = 0; i < days.size(); ++i) {
    if (!days[i].labels || days[i].labels->size() < 2) continue;
    if (const auto r = pearson(preds[i], *days[i].labels)) {
      acc += *r;
      ++cnt;
    }
  }
  return cnt > 0 ? acc / cnt : 0.0;
}

ModelState ModelState::init(Forecaster f, AdapterParams a,
                            const MetaConfig& cfg) {
  ModelState s;
  s.forecaster = std::move(f);
  s.adapters = std::move(a);
  s.use_adapters = cfg.use_adapters;
  s.eta = cfg.eta;
  s.eta_a = cfg.eta_a;
  s.opt_f = Adam(AdamConfig{.lr = cfg.eta});
  s.opt_ad = Adam(AdamConfig{.lr = cfg.eta_a});
  return s;
}

AdaptationSet make_adaptation_set(const Task& current, const Task* historical) {
  AdaptationSet out;
  auto [x, y] = stack_window_labeled(current.train);
  if (historical != nullptr) {
    auto [hx, hy] = stack_window_labeled(historical->train);
    if (hx.cols() != x.cols())
      throw ShapeError("make_adaptation_set: feature width mismatch");
    Matrix jx(x.rows() + hx.rows(), x.cols());
    jx << x, hx;
    Vector jy(y.size() + hy.size());
    jy << y, hy;
    out.x = std::move(jx);
    out.y = std::move(jy);
    out.includes_history = true;
    out.history_task = historical->index;
  } else {
    out.x = std::move(x);
    out.y = std::move(y);
  }
  return out;
}

Forecaster adapt_step(const ModelState& state, const AdaptationSet& pool) {
  if (pool.x.rows() == 0) throw ValueError("adapt_step: empty adaptation set");
  Forecaster adapted = state.forecaster;

  ad::Tape tape;
  Binder bind(tape);
  ForecasterVars fv = bind_forecaster(bind, adapted);
  ad::Tensor x = bind.constant(pool.x);
  ad::Tensor y = bind.constant(pool.y);

  ad::Tensor loss;
  if (state.use_adapters) {
    AdapterVars av = freeze_adapters(bind, state.adapters);
    ad::Tensor beta = projection_weights(x, av);
    ad::Tensor xt = adapt_data(x, beta, av);
    ad::Tensor yt = adapt_labels(y, beta, av);
    loss = ad::mse(predict(fv, xt), yt);
  } else {
    loss = ad::mse(predict(fv, x), y);
  }
  tape.backward(loss);
  sgd_step(bind.params(), bind.grads(), state.eta);
  return adapted;
}

Vector predict_scores(const ModelState& state, const Forecaster& adapted,
                      const Matrix& x) {
  ad::Tape tape;
  Binder bind(tape);
  ForecasterVars fv = freeze_forecaster(bind, adapted);
  ad::Tensor xs = bind.constant(x);
  if (!state.use_adapters) return predict(fv, xs).value().col(0);

  AdapterVars av = freeze_adapters(bind, state.adapters);
  ad::Tensor beta = projection_weights(xs, av);
  ad::Tensor raw = predict(fv, adapt_data(xs, beta, av));
  return invert_labels(raw, beta, av).value().col(0);
}

std::vector<Vector> predict_task(const ModelState& state,
                                 const Forecaster& adapted,
                                 const std::vector<DayBatch>& days) {
  std::vector<Vector> out;
  out.reserve(days.size());
  for (const DayBatch& d : days)
    out.push_back(predict_scores(state, adapted, d.features));
  return out;
}

double online_step(ModelState& state, const Matrix& x, const Vector& y,
                   const Forecaster& adapted) {
  if (x.rows() == 0) throw ValueError("online_step: empty window");
  if (x.rows() != y.size())
    throw ShapeError("online_step: feature/label row mismatch");

  // Gradients are evaluated at the adapted parameters; a scratch copy keeps
  // the caller's adapted model intact while the tape points into it.
  Forecaster at = adapted;

  ad::Tape tape;
  Binder bf(tape);
  ForecasterVars fv = bind_forecaster(bf, at);
  ad::Tensor xs = bf.constant(x);
  ad::Tensor ys = bf.constant(y);

  double loss_value = 0.0;
  if (state.use_adapters) {
    Binder ba(tape);
    AdapterVars av = bind_adapters(ba, state.adapters);
    ad::Tensor beta = projection_weights(xs, av);
    ad::Tensor pred = invert_labels(predict(fv, adapt_data(xs, beta, av)),
                                    beta, av);
    ad::Tensor reg = ad::scale(ad::mse(adapt_labels(ys, beta, av), ys), 0.5);
    ad::Tensor loss = ad::add(ad::mse(pred, ys), reg);
    loss_value = loss.value()(0, 0);
    tape.backward(loss);
    state.opt_f.step(forecaster_refs(state.forecaster), bf.grads());
    state.opt_ad.step(ba.params(), ba.grads());
  } else {
    ad::Tensor loss = ad::mse(predict(fv, xs), ys);
    loss_value = loss.value()(0, 0);
    tape.backward(loss);
    state.opt_f.step(forecaster_refs(state.forecaster), bf.grads());
  }
  return loss_value;
}

CycleStep begin_cycle(ModelState& state, const Task& task,
                      const Task* historical) {
  CycleStep step;
  step.adapted = adapt_step(state, make_adaptation_set(task, historical));
  step.predictions = predict_task(state, step.adapted, task.test);
  return step;
}

TaskRunStats finish_cycle(ModelState& state, const CycleStep& step,
                          const Task& labeled) {
  TaskRunStats stats;
  stats.predictions = step.predictions;
  stats.ic = window_ic(labeled.test, step.predictions);
  auto [tx, ty] = stack_window_labeled(labeled.test);
  stats.loss = online_step(state, tx, ty, step.adapted);
  return stats;
}

TaskRunStats run_task_cycle(ModelState& state, const Task& task,
                            const Task* historical) {
  const CycleStep step = begin_cycle(state, task, historical);
  return finish_cycle(state, step, task);
}

TrainForecasterResult train_forecaster(
    const ModelState& start, const std::vector<Task>& train_tasks,
    const std::vector<Task>& val_tasks, const MetaConfig& cfg,
    const std::function<void(int, const ModelState&)>& epoch_hook) {
  if (train_tasks.empty()) throw ValueError("train_forecaster: no train tasks");
  if (val_tasks.empty()) throw ValueError("train_forecaster: no val tasks");
  if (cfg.max_epochs < 1 || cfg.patience < 1)
    throw ValueError("train_forecaster: max_epochs and patience must be >= 1");

  TrainForecasterResult out;
  ModelState state = start;
  double best_ic = -std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (const Task& t : train_tasks) {
      const TaskRunStats s = run_task_cycle(state, t);
      out.log.push_back({epoch, t.index, "train", s.loss, s.ic});
    }

    const ModelState snapshot = state;  // optimizer state included
    double val_ic = 0.0;
    for (const Task& t : val_tasks) {
      const TaskRunStats s = run_task_cycle(state, t);
      out.log.push_back({epoch, t.index, "val", s.loss, s.ic});
      val_ic += s.ic;
    }
    val_ic /= static_cast<double>(val_tasks.size());
    state = snapshot;  // validation must leave no trace

    out.val_ic_by_epoch.push_back(val_ic);
    out.epochs_run = epoch;
    if (epoch_hook) epoch_hook(epoch, state);

    if (epoch == 1 || val_ic > best_ic) {
      best_ic = val_ic;
      out.best_epoch = epoch;
      out.model = snapshot;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) break;
    }
  }
  return out;
}

}  // namespace driftmeta
