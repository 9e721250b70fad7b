#pragma once

#include <optional>
#include <string>
#include <vector>

#include "driftmeta/autodiff.hpp"
#include "driftmeta/rng.hpp"

namespace driftmeta {

// One trading date: the cross-section of symbols with their features and,
// once realized, trend labels.
struct DayBatch {
  int date = 0;
  std::vector<std::string> symbols;  // row order of `features`
  Matrix features;                   // n x d
  std::optional<Vector> labels;      // n, absent until realized
};

// A segment of the stream: `train` is the freshest labeled window, `test`
// the window right after it. Consecutive tasks overlap by construction:
// task i+1 trains on what task i was tested on.
struct Task {
  int index = 0;
  std::vector<DayBatch> train;
  std::vector<DayBatch> test;
  std::vector<int> history;  // indices of all earlier tasks
};

// Ground truth for one regime of the synthetic stream. Labels follow
// y = x . w + bias + noise while the regime is active. `feature_shift` moves
// the feature mean so the regime leaves a trace observable from features
// alone (real trend features carry their recent history the same way);
// zero keeps features standard normal.
struct Regime {
  Vector w;
  double bias = 0.0;
  double sigma = 0.0;
  Vector feature_shift;
};

enum class ScenarioKind { RecurringCycle, RandomWalk, Mixed };

struct DriftScenario {
  std::vector<Regime> regimes;
  std::vector<int> schedule;  // date -> regime id, covers every date
  ScenarioKind kind = ScenarioKind::RecurringCycle;
  uint64_t seed = 0;
};

// Relative one-step-ahead change: r_t = (p_{t+1} - p_t) / p_t. The final
// date has no realized label and is omitted (output is one shorter).
std::vector<double> compute_trend_labels(const std::vector<double>& prices);

// Cuts the stream into tasks of `t_ada` consecutive dates. A trailing short
// window still forms a task so no date is dropped. Train windows must be
// fully labeled.
std::vector<Task> segment_tasks(const std::vector<DayBatch>& stream,
                                int t_ada);

// All features of a window stacked into one design matrix (rows follow the
// day order, then each day's symbol order).
Matrix stack_window_features(const std::vector<DayBatch>& days);
// Stacked (X, y); throws if any day is missing labels.
std::pair<Matrix, Vector> stack_window_labeled(
    const std::vector<DayBatch>& days);

struct GeneratedStream {
  std::vector<DayBatch> days;
  std::vector<int> regime_log;  // date -> regime id actually used
};

// Synthetic stream: features i.i.d. standard normal per date (plus the
// regime's feature shift), labels linear in features with regime noise.
// Identical (scenario, dims) input gives bit-identical output.
GeneratedStream generate_stream(const DriftScenario& scenario, int dates,
                                int symbols, int d);

// Declarative scenario recipe; expanded into a concrete DriftScenario with
// regimes and a full schedule.
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::RecurringCycle;
  int num_regimes = 2;
  int dates = 750;
  int symbols = 100;
  int features = 12;
  int t_ada = 15;        // window length the schedule is aligned to
  double sigma = 0.1;    // label noise
  double bias_scale = 0.1;
  double feature_shift = 0.0;
  int period_windows = 1;     // windows per regime before cycling on
  double emerge_prob = 0.2;   // Mixed only: chance a window is a fresh regime
};

DriftScenario build_scenario(const ScenarioSpec& spec, uint64_t seed);

// CSV: header "date,symbol,f0..f{d-1}[,label]"; doubles printed with enough
// digits to round-trip exactly.
void write_stream_csv(const std::vector<DayBatch>& days,
                      const std::string& path);
std::vector<DayBatch> load_stream_csv(const std::string& path,
                                      bool zscore = false);
void write_regime_log_csv(const std::vector<int>& regime_log,
                          const std::string& path);

// Guarded access to a stream during evaluation. Labels are only readable for
// dates strictly before the horizon; anything else is a lookahead bug and
// throws.
class StreamView {
 public:
  explicit StreamView(const std::vector<DayBatch>* days) : days_(days) {}

  void set_label_horizon(int date) { horizon_ = date; }
  int label_horizon() const { return horizon_; }
  int num_dates() const { return static_cast<int>(days_->size()); }

  const DayBatch& day(int date) const;
  Vector labels(int date) const;  // throws LookaheadError past the horizon

  Matrix stack_features(const std::vector<int>& dates) const;
  // Stacked (X, y) over the given dates; every label read is checked.
  std::pair<Matrix, Vector> stack_labeled(const std::vector<int>& dates) const;

 private:
  const std::vector<DayBatch>* days_;
  int horizon_ = 0;
};

}  // namespace driftmeta
