#pragma once

#include <optional>
#include <string>
#include <vector>

#include "driftmeta/meta.hpp"

namespace driftmeta {

// Attention pooling parameters: one fixed-length task embedding from a
// variable number of sample embeddings.
struct EmbeddingParams {
  int q = 32;  // embedding width, matches the forecaster
  int p = 16;  // attention width
  Matrix v1;   // q x q
  Matrix eps;  // 1 x q
  Matrix v2;   // q x p
  Matrix v3;   // p x 1

  static EmbeddingParams init(int q, int p, Rng& rng);
  void visit(const std::function<void(const std::string&, Matrix&)>& fn);
};

// Single-layer GRU over a length-L embedding sequence plus a linear output
// map; predicts the next task's embedding.
struct InferenceNet {
  int q = 32;
  int lookback = 8;  // L
  Matrix wz, wr, wn;  // q x q, input to gates
  Matrix uz, ur, un;  // q x q, recurrence
  Matrix bz, br, bn;  // 1 x q
  Matrix wo, bo;      // q x q, 1 x q output map

  static InferenceNet init(int q, int lookback, Rng& rng);
  void visit(const std::function<void(const std::string&, Matrix&)>& fn);
};

struct TaskInferParams {
  EmbeddingParams pi1;
  InferenceNet pi2;
  double kappa = 80.0;  // gate percentile
  double gamma = 1.0;   // triplet margin
};

struct EmbeddingVars {
  ad::Tensor v1, eps, v2, v3;
};
struct GruVars {
  ad::Tensor wz, wr, wn, uz, ur, un, bz, br, bn, wo, bo;
};

EmbeddingVars bind_embedding(Binder& b, EmbeddingParams& e,
                             const std::string& prefix = "pi1");
EmbeddingVars freeze_embedding(Binder& b, const EmbeddingParams& e);
GruVars bind_gru(Binder& b, InferenceNet& n,
                 const std::string& prefix = "pi2");
GruVars freeze_gru(Binder& b, const InferenceNet& n);

// Attention-pooled task embedding: alpha = softmax over every sample row of
// tanh(s V2) v3; E = alpha' (s V1 + eps). s is m x q, result 1 x q.
ad::Tensor embed_task_t(ad::Tensor s, const EmbeddingVars& e);
Matrix embed_task(const Matrix& s, const EmbeddingParams& e);

// GRU forward over exactly L embeddings (oldest first), then the output map.
ad::Tensor predict_embedding_t(const std::vector<ad::Tensor>& seq,
                               const GruVars& g);
// Takes the full history, keeps the last L entries and left-pads with the
// oldest available embedding when the history is shorter.
Matrix predict_embedding(const std::vector<Matrix>& history,
                         const InferenceNet& n);
std::vector<Matrix> pad_sequence(const std::vector<Matrix>& history, int len);

// max(|ep - et| - |ep - en| + gamma, 0) with L2 distances; hinge and sqrt
// kinks take subgradient zero.
ad::Tensor triplet_loss_t(ad::Tensor ep, ad::Tensor et, ad::Tensor en,
                          double gamma);
double triplet_loss(const Matrix& ep, const Matrix& et, const Matrix& en,
                    double gamma);

// Sample embeddings of a task's train window through the frozen model:
// adapters first, then the encoder. The basis of every task embedding.
Matrix sample_embeddings(const ModelState& model, const Task& task);

// Sample embeddings never change once the underlying model is frozen, so a
// pass that revisits tasks computes each one once.
class SampleEmbeddingCache {
 public:
  explicit SampleEmbeddingCache(const ModelState* model) : model_(model) {}
  const Matrix& get(const Task& task) const;

 private:
  const ModelState* model_;
  mutable std::vector<std::pair<int, Matrix>> cache_;
};

struct Triplet {
  int anchor = 0;                // sequence ends at this task
  int target = 0;                // always anchor + 1
  std::vector<int> negatives;    // every other task except anchor, target
};

// Anchors run from L to n_tasks - 2 so each target exists and each anchor
// has a full lookback. Requires n_tasks >= L + 2.
std::vector<Triplet> build_triplets(int n_tasks, int lookback);

// Append-only store of past task embeddings. Selection returns the entry
// nearest to the predicted embedding, but only when that match is no
// farther than typical memory spacing: the squared distance must fall at
// or below the kappa-th percentile of all pairwise squared distances
// between stored embeddings. A prediction near a stored recurring pattern
// passes easily; one floating away from every stored pattern fails. Fewer
// than 3 entries never select.
struct MemoryEntry {
  int task = 0;
  Matrix e;  // 1 x q
};

class Memory {
 public:
  explicit Memory(double kappa = 80.0) : kappa_(kappa) {}

  void append(int task, Matrix e);
  int size() const { return static_cast<int>(entries_.size()); }
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  double kappa() const { return kappa_; }

  std::optional<int> select(const Matrix& e_p) const;

 private:
  double kappa_;
  std::vector<MemoryEntry> entries_;
};

// ---- adapting walk ---------------------------------------------------------

// Embedding history plus memory carried across a sequential pass. The
// embedding pipeline (frozen model and pi) stays fixed while the forecasting
// state evolves task by task.
struct WalkState {
  Memory memory{80.0};
  std::vector<Matrix> history;  // embeddings in task order
};

// Computes and stores embeddings of already-learned tasks (no model updates).
void seed_walk(WalkState& walk, const SampleEmbeddingCache& frozen,
               const TaskInferParams& pi, const std::vector<Task>& tasks);

struct TaskOutcome {
  int task = 0;
  std::optional<int> selected;  // h*, when the gate accepted
  double ic = 0.0;
  double loss = 0.0;
  std::vector<Vector> predictions;
};

// The walk split at the point where test labels become necessary (mirrors
// begin_cycle / finish_cycle): begin embeds, selects, adapts and predicts;
// finish applies the online update once the window's labels are realized.
struct TaskStep {
  CycleStep cycle;
  std::optional<int> selected;
};
TaskStep begin_task(ModelState& state, const SampleEmbeddingCache& frozen,
                    const TaskInferParams& pi, WalkState& walk,
                    const Task& task, const std::vector<Task>& universe,
                    bool use_selection = true);
TaskOutcome finish_task(ModelState& state, const TaskStep& step,
                        const Task& labeled);

// One full model adaptation with task inference: embed the current task,
// predict the next pattern, optionally join the matched historical window,
// then adapt / predict / learn online. `universe` must contain every task
// selectable by index.
TaskOutcome walk_one_task(ModelState& state,
                          const SampleEmbeddingCache& frozen,
                          const TaskInferParams& pi, WalkState& walk,
                          const Task& task,
                          const std::vector<Task>& universe,
                          bool use_selection = true);

// ---- stage-two training ----------------------------------------------------

struct TaskInferConfig {
  int p = 16;
  int lookback = 8;
  double kappa = 80.0;
  double gamma = 1.0;
  double eta_t = 1e-3;
  int patience = 5;
  int max_epochs = 50;
};

struct TrainInferenceResult {
  TaskInferParams pi;
  std::vector<double> train_loss_by_epoch;
  std::vector<double> val_ic_by_epoch;
  int best_epoch = 0;
  int epochs_run = 0;
};

// Trains pi1 and pi2 jointly on triplets built from the training tasks,
// with the sample encoder frozen at the given model. Validation per epoch
// runs the full adapting protocol over the validation tasks from a fresh
// copy of the model. Returns the best-validation parameters.
TrainInferenceResult train_inference(const ModelState& theta0,
                                     const std::vector<Task>& train_tasks,
                                     const std::vector<Task>& val_tasks,
                                     const std::vector<Task>& universe,
                                     const TaskInferConfig& cfg,
                                     uint64_t init_seed);

// CSV dump `task,dim0..dim{q-1}` for offline inspection.
void write_embeddings_csv(const std::vector<MemoryEntry>& entries,
                          const std::string& path);

}  // namespace driftmeta
