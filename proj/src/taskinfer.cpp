#include "driftmeta/taskinfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "driftmeta/bind.hpp"
#include "driftmeta/errors.hpp"
#include "driftmeta/io.hpp"
#include "driftmeta/metrics.hpp"

namespace driftmeta {

namespace {

Matrix uniform_init(Rng& rng, int rows, int cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

double sq_dist(const Matrix& a, const Matrix& b) {
  return (a - b).squaredNorm();
}

const Task& task_by_index(const std::vector<Task>& universe, int index) {
  for (const Task& t : universe)
    if (t.index == index) return t;
  throw ValueError("taskinfer: task " + std::to_string(index) +
                   " not found in the task universe");
}

}  // namespace

EmbeddingParams EmbeddingParams::init(int q, int p, Rng& rng) {
  if (q < 1 || p < 1)
    throw ValueError("EmbeddingParams: dims must be positive");
  EmbeddingParams e;
  e.q = q;
  e.p = p;
  e.v1 = uniform_init(rng, q, q, q);
  e.eps = uniform_init(rng, 1, q, q);
  e.v2 = uniform_init(rng, q, p, q);
  e.v3 = uniform_init(rng, p, 1, p);
  return e;
}

void EmbeddingParams::visit(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("v1", v1);
  fn("eps", eps);
  fn("v2", v2);
  fn("v3", v3);
}

InferenceNet InferenceNet::init(int q, int lookback, Rng& rng) {
  if (q < 1) throw ValueError("InferenceNet: q must be positive");
  if (lookback < 1) throw ValueError("InferenceNet: lookback must be >= 1");
  InferenceNet n;
  n.q = q;
  n.lookback = lookback;
  n.wz = uniform_init(rng, q, q, q);
  n.wr = uniform_init(rng, q, q, q);
  n.wn = uniform_init(rng, q, q, q);
  n.uz = uniform_init(rng, q, q, q);
  n.ur = uniform_init(rng, q, q, q);
  n.un = uniform_init(rng, q, q, q);
  n.bz = uniform_init(rng, 1, q, q);
  n.br = uniform_init(rng, 1, q, q);
  n.bn = uniform_init(rng, 1, q, q);
  n.wo = uniform_init(rng, q, q, q);
  n.bo = uniform_init(rng, 1, q, q);
  return n;
}

void InferenceNet::visit(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("wz", wz);
  fn("wr", wr);
  fn("wn", wn);
  fn("uz", uz);
  fn("ur", ur);
  fn("un", un);
  fn("bz", bz);
  fn("br", br);
  fn("bn", bn);
  fn("wo", wo);
  fn("bo", bo);
}

EmbeddingVars bind_embedding(Binder& b, EmbeddingParams& e,
                             const std::string& prefix) {
  return {b.bind(prefix + ".v1", e.v1), b.bind(prefix + ".eps", e.eps),
          b.bind(prefix + ".v2", e.v2), b.bind(prefix + ".v3", e.v3)};
}

EmbeddingVars freeze_embedding(Binder& b, const EmbeddingParams& e) {
  return {b.constant(e.v1), b.constant(e.eps), b.constant(e.v2),
          b.constant(e.v3)};
}

GruVars bind_gru(Binder& b, InferenceNet& n, const std::string& prefix) {
  GruVars g;
  g.wz = b.bind(prefix + ".wz", n.wz);
  g.wr = b.bind(prefix + ".wr", n.wr);
  g.wn = b.bind(prefix + ".wn", n.wn);
  g.uz = b.bind(prefix + ".uz", n.uz);
  g.ur = b.bind(prefix + ".ur", n.ur);
  g.un = b.bind(prefix + ".un", n.un);
  g.bz = b.bind(prefix + ".bz", n.bz);
  g.br = b.bind(prefix + ".br", n.br);
  g.bn = b.bind(prefix + ".bn", n.bn);
  g.wo = b.bind(prefix + ".wo", n.wo);
  g.bo = b.bind(prefix + ".bo", n.bo);
  return g;
}

GruVars freeze_gru(Binder& b, const InferenceNet& n) {
  GruVars g;
  g.wz = b.constant(n.wz);
  g.wr = b.constant(n.wr);
  g.wn = b.constant(n.wn);
  g.uz = b.constant(n.uz);
  g.ur = b.constant(n.ur);
  g.un = b.constant(n.un);
  g.bz = b.constant(n.bz);
  g.br = b.constant(n.br);
  g.bn = b.constant(n.bn);
  g.wo = b.constant(n.wo);
  g.bo = b.constant(n.bo);
  return g;
}

ad::Tensor embed_task_t(ad::Tensor s, const EmbeddingVars& e) {
  if (s.rows() < 1) throw ValueError("embed_task: no sample embeddings");
  if (s.cols() != e.v1.rows())
    throw ShapeError("embed_task: embedding width mismatch");
  ad::Tensor score = ad::matmul(ad::tanh(ad::matmul(s, e.v2)), e.v3);  // m x 1
  ad::Tensor alpha = ad::softmax_rows(ad::transpose(score));           // 1 x m
  ad::Tensor lin = ad::add_rowvec(ad::matmul(s, e.v1), e.eps);         // m x q
  return ad::matmul(alpha, lin);                                       // 1 x q
}

Matrix embed_task(const Matrix& s, const EmbeddingParams& e) {
  ad::Tape tape;
  Binder b(tape);
  return embed_task_t(b.constant(s), freeze_embedding(b, e)).value();
}

namespace {

// One GRU cell update; h may be invalid for the first step (h_0 = 0).
ad::Tensor gru_cell(ad::Tensor x, ad::Tensor h, const GruVars& g) {
  const bool first = !h.valid();
  auto gate_pre = [&](const ad::Tensor& w, const ad::Tensor& u,
                      const ad::Tensor& bias) {
    ad::Tensor pre = ad::matmul(x, w);
    if (!first) pre = ad::add(pre, ad::matmul(h, u));
    return ad::add_rowvec(pre, bias);
  };
  ad::Tensor z = ad::sigmoid(gate_pre(g.wz, g.uz, g.bz));
  ad::Tensor n;
  if (first) {
    n = ad::tanh(ad::add_rowvec(ad::matmul(x, g.wn), g.bn));
  } else {
    ad::Tensor r = ad::sigmoid(gate_pre(g.wr, g.ur, g.br));
    ad::Tensor pre = ad::add(ad::matmul(x, g.wn),
                             ad::matmul(ad::mul(r, h), g.un));
    n = ad::tanh(ad::add_rowvec(pre, g.bn));
  }
  ad::Tensor keep = ad::add_const(ad::scale(z, -1.0), 1.0);  // 1 - z
  ad::Tensor out = ad::mul(keep, n);
  if (!first) out = ad::add(out, ad::mul(z, h));
  return out;
}

}  // namespace

ad::Tensor predict_embedding_t(const std::vector<ad::Tensor>& seq,
                               const GruVars& g) {
  if (seq.empty()) throw ValueError("predict_embedding: empty sequence");
  ad::Tensor h;
  for (const ad::Tensor& x : seq) h = gru_cell(x, h, g);
  return ad::add_rowvec(ad::matmul(h, g.wo), g.bo);
}

std::vector<Matrix> pad_sequence(const std::vector<Matrix>& history, int len) {
  if (history.empty()) throw ValueError("pad_sequence: empty history");
  if (len < 1) throw ValueError("pad_sequence: length must be >= 1");
  std::vector<Matrix> out;
  out.reserve(static_cast<size_t>(len));
  const int n = static_cast<int>(history.size());
  for (int i = n - len; i < n; ++i)
    out.push_back(history[static_cast<size_t>(std::max(i, 0))]);
  return out;
}

Matrix predict_embedding(const std::vector<Matrix>& history,
                         const InferenceNet& n) {
  const auto seq = pad_sequence(history, n.lookback);
  ad::Tape tape;
  Binder b(tape);
  const GruVars g = freeze_gru(b, n);
  std::vector<ad::Tensor> xs;
  xs.reserve(seq.size());
  for (const Matrix& m : seq) xs.push_back(b.constant(m));
  return predict_embedding_t(xs, g).value();
}

ad::Tensor triplet_loss_t(ad::Tensor ep, ad::Tensor et, ad::Tensor en,
                          double gamma) {
  if (gamma < 0.0) throw ValueError("triplet_loss: margin must be >= 0");
  ad::Tensor dt = ad::l2_norm(ad::sub(ep, et));
  ad::Tensor dn = ad::l2_norm(ad::sub(ep, en));
  return ad::relu(ad::add_const(ad::sub(dt, dn), gamma));
}

double triplet_loss(const Matrix& ep, const Matrix& et, const Matrix& en,
                    double gamma) {
  ad::Tape tape;
  Binder b(tape);
  return triplet_loss_t(b.constant(ep), b.constant(et), b.constant(en), gamma)
      .value()(0, 0);
}

Matrix sample_embeddings(const ModelState& model, const Task& task) {
  const Matrix x = stack_window_features(task.train);
  ad::Tape tape;
  Binder b(tape);
  const ForecasterVars fv = freeze_forecaster(b, model.forecaster);
  ad::Tensor xs = b.constant(x);
  if (!model.use_adapters) return encode(fv, xs).value();
  const AdapterVars av = freeze_adapters(b, model.adapters);
  ad::Tensor beta = projection_weights(xs, av);
  return encode(fv, adapt_data(xs, beta, av)).value();
}

const Matrix& SampleEmbeddingCache::get(const Task& task) const {
  for (const auto& [index, s] : cache_)
    if (index == task.index) return s;
  cache_.emplace_back(task.index, sample_embeddings(*model_, task));
  return cache_.back().second;
}

std::vector<Triplet> build_triplets(int n_tasks, int lookback) {
  if (lookback < 1) throw ValueError("build_triplets: lookback must be >= 1");
  if (n_tasks < lookback + 2) {
    throw ValueError("build_triplets: need at least " +
                     std::to_string(lookback + 2) + " tasks, have " +
                     std::to_string(n_tasks));
  }
  std::vector<Triplet> out;
  for (int i = lookback; i <= n_tasks - 2; ++i) {
    Triplet t;
    t.anchor = i;
    t.target = i + 1;
    for (int k = 0; k < n_tasks; ++k)
      if (k != i && k != i + 1) t.negatives.push_back(k);
    out.push_back(std::move(t));
  }
  return out;
}

void Memory::append(int task, Matrix e) {
  if (!entries_.empty() && entries_.back().task >= task)
    throw ValueError("Memory: task indices must be appended in order");
  entries_.push_back({task, std::move(e)});
}

std::optional<int> Memory::select(const Matrix& e_p) const {
  const int n = size();
  if (n < 3) return std::nullopt;

  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    const double d = sq_dist(entries_[static_cast<size_t>(j)].e, e_p);
    if (d < best_d) {  // strict: earliest entry wins ties
      best_d = d;
      best = j;
    }
  }

  // the match may not be farther than the kappa-th percentile of the
  // memory's own pairwise spacing: a prediction that landed near some stored
  // recurring pattern passes, one floating away from everything stored
  // (nothing recurring to land on, or an unconverged predictor) fails
  std::vector<double> pairwise;
  pairwise.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      pairwise.push_back(sq_dist(entries_[static_cast<size_t>(a)].e,
                                 entries_[static_cast<size_t>(b)].e));
  const double threshold = percentile(std::move(pairwise), kappa_);
  if (best_d > threshold) return std::nullopt;
  return entries_[static_cast<size_t>(best)].task;
}

void seed_walk(WalkState& walk, const SampleEmbeddingCache& frozen,
               const TaskInferParams& pi, const std::vector<Task>& tasks) {
  for (const Task& t : tasks) {
    Matrix e = embed_task(frozen.get(t), pi.pi1);
    walk.history.push_back(e);
    walk.memory.append(t.index, std::move(e));
  }
}

TaskStep begin_task(ModelState& state, const SampleEmbeddingCache& frozen,
                    const TaskInferParams& pi, WalkState& walk,
                    const Task& task, const std::vector<Task>& universe,
                    bool use_selection) {
  TaskStep step;
  Matrix e_now = embed_task(frozen.get(task), pi.pi1);
  walk.history.push_back(e_now);

  const Task* historical = nullptr;
  if (use_selection) {
    const Matrix e_p = predict_embedding(walk.history, pi.pi2);
    step.selected = walk.memory.select(e_p);
    if (step.selected) historical = &task_by_index(universe, *step.selected);
  }
  // current task joins the memory only after its own selection
  walk.memory.append(task.index, std::move(e_now));

  step.cycle = begin_cycle(state, task, historical);
  return step;
}

TaskOutcome finish_task(ModelState& state, const TaskStep& step,
                        const Task& labeled) {
  TaskOutcome out;
  out.task = labeled.index;
  out.selected = step.selected;
  TaskRunStats stats = finish_cycle(state, step.cycle, labeled);
  out.ic = stats.ic;
  out.loss = stats.loss;
  out.predictions = std::move(stats.predictions);
  return out;
}

TaskOutcome walk_one_task(ModelState& state,
                          const SampleEmbeddingCache& frozen,
                          const TaskInferParams& pi, WalkState& walk,
                          const Task& task,
                          const std::vector<Task>& universe,
                          bool use_selection) {
  const TaskStep step =
      begin_task(state, frozen, pi, walk, task, universe, use_selection);
  return finish_task(state, step, task);
}

TrainInferenceResult train_inference(const ModelState& theta0,
                                     const std::vector<Task>& train_tasks,
                                     const std::vector<Task>& val_tasks,
                                     const std::vector<Task>& universe,
                                     const TaskInferConfig& cfg,
                                     uint64_t init_seed) {
  if (val_tasks.empty()) throw ValueError("train_inference: no val tasks");
  const int n_tr = static_cast<int>(train_tasks.size());
  const auto triplets = build_triplets(n_tr, cfg.lookback);

  Rng rng(init_seed);
  TrainInferenceResult out;
  TaskInferParams pi;
  pi.pi1 = EmbeddingParams::init(theta0.forecaster.q, cfg.p, rng);
  pi.pi2 = InferenceNet::init(theta0.forecaster.q, cfg.lookback, rng);
  pi.kappa = cfg.kappa;
  pi.gamma = cfg.gamma;

  const SampleEmbeddingCache frozen(&theta0);
  for (const Task& t : train_tasks) frozen.get(t);  // fill once, up front

  Adam opt(AdamConfig{.lr = cfg.eta_t});
  double best_ic = -std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    size_t steps = 0;
    for (const Triplet& trip : triplets) {
      // one optimizer step per (anchor, target, negative); batching all the
      // negatives of an anchor into one step starves the optimizer of steps
      // and the loss plateaus within the patience window
      for (int k : trip.negatives) {
        ad::Tape tape;
        Binder bind(tape);
        EmbeddingVars ev = bind_embedding(bind, pi.pi1);
        GruVars gv = bind_gru(bind, pi.pi2);

        // tasks showing up twice (a negative inside the lookback window)
        // embed exactly once on the tape
        std::vector<ad::Tensor> embeds(static_cast<size_t>(n_tr));
        auto embed_of = [&](int j) -> ad::Tensor& {
          ad::Tensor& slot = embeds[static_cast<size_t>(j)];
          if (!slot.valid()) {
            slot = embed_task_t(
                bind.constant(frozen.get(train_tasks[static_cast<size_t>(j)])),
                ev);
          }
          return slot;
        };

        std::vector<ad::Tensor> seq;
        for (int j = trip.anchor - cfg.lookback + 1; j <= trip.anchor; ++j)
          seq.push_back(embed_of(j));
        ad::Tensor ep = predict_embedding_t(seq, gv);
        ad::Tensor loss =
            triplet_loss_t(ep, embed_of(trip.target), embed_of(k), cfg.gamma);
        epoch_loss += loss.value()(0, 0);
        tape.backward(loss);
        opt.step(bind.params(), bind.grads());
        ++steps;
      }
    }
    out.train_loss_by_epoch.push_back(epoch_loss /
                                      static_cast<double>(steps));

    // validation: the full adapting protocol from a fresh model copy
    ModelState probe = theta0;
    WalkState walk{Memory(cfg.kappa), {}};
    seed_walk(walk, frozen, pi, train_tasks);
    double val_ic = 0.0;
    for (const Task& t : val_tasks)
      val_ic += walk_one_task(probe, frozen, pi, walk, t, universe).ic;
    val_ic /= static_cast<double>(val_tasks.size());
    out.val_ic_by_epoch.push_back(val_ic);
    out.epochs_run = epoch;

    if (epoch == 1 || val_ic > best_ic) {
      best_ic = val_ic;
      out.best_epoch = epoch;
      out.pi = pi;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }
  return out;
}

void write_embeddings_csv(const std::vector<MemoryEntry>& entries,
                          const std::string& path) {
  std::ostringstream out;
  const Eigen::Index q = entries.empty() ? 0 : entries.front().e.cols();
  out << "task";
  for (Eigen::Index j = 0; j < q; ++j) out << ",dim" << j;
  out << "\n";
  for (const MemoryEntry& m : entries) {
    out << m.task;
    for (Eigen::Index j = 0; j < q; ++j)
      out << "," << format_double(m.e(0, j));
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

}  // namespace driftmeta
