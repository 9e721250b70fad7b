#include "driftmeta/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "driftmeta/errors.hpp"
#include "driftmeta/io.hpp"

namespace driftmeta {

std::vector<double> compute_trend_labels(const std::vector<double>& prices) {
  std::vector<double> out;
  if (prices.size() < 2) return out;
  out.reserve(prices.size() - 1);
  for (size_t t = 0; t + 1 < prices.size(); ++t) {
    if (prices[t] <= 0.0)
      throw ValueError("compute_trend_labels: non-positive price at step " +
                       std::to_string(t));
    out.push_back((prices[t + 1] - prices[t]) / prices[t]);
  }
  return out;
}

std::vector<Task> segment_tasks(const std::vector<DayBatch>& stream,
                                int t_ada) {
  if (t_ada < 1) throw ValueError("segment_tasks: t_ada must be positive");
  const int n = static_cast<int>(stream.size());
  for (int i = 1; i < n; ++i) {
    if (stream[i].date <= stream[i - 1].date)
      throw ValueError("segment_tasks: dates must be strictly increasing");
  }
  if (n <= t_ada)
    throw ValueError("segment_tasks: " + std::to_string(n) +
                     " dates cannot form a task of window " +
                     std::to_string(t_ada));
  const int windows = (n + t_ada - 1) / t_ada;
  std::vector<Task> tasks;
  for (int w = 1; w < windows; ++w) {
    Task task;
    task.index = w - 1;
    const int train_begin = (w - 1) * t_ada;
    const int test_begin = w * t_ada;
    const int test_end = std::min(n, (w + 1) * t_ada);
    for (int i = train_begin; i < test_begin; ++i) {
      if (!stream[i].labels)
        throw ValueError("segment_tasks: train date " +
                         std::to_string(stream[i].date) + " lacks labels");
      task.train.push_back(stream[i]);
    }
    for (int i = test_begin; i < test_end; ++i) task.test.push_back(stream[i]);
    for (int k = 0; k < task.index; ++k) task.history.push_back(k);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

GeneratedStream generate_stream(const DriftScenario& scenario, int dates,
                                int symbols, int d) {
  if (dates < 1 || symbols < 1 || d < 1)
    throw ValueError("generate_stream: dates, symbols and features must be positive");
  if (static_cast<int>(scenario.schedule.size()) < dates)
    throw ValueError("generate_stream: schedule covers " +
                     std::to_string(scenario.schedule.size()) +
                     " dates, need " + std::to_string(dates));
  for (const Regime& r : scenario.regimes) {
    if (r.w.size() != d)
      throw ValueError("generate_stream: regime weight dim " +
                       std::to_string(r.w.size()) + " != feature dim " +
                       std::to_string(d));
    if (r.feature_shift.size() != 0 && r.feature_shift.size() != d)
      throw ValueError("generate_stream: feature shift dim mismatch");
  }

  Rng rng = derive_rng(scenario.seed, "stream");
  GeneratedStream out;
  out.days.reserve(static_cast<size_t>(dates));
  out.regime_log.reserve(static_cast<size_t>(dates));
  char name[16];
  for (int t = 0; t < dates; ++t) {
    const int rid = scenario.schedule[static_cast<size_t>(t)];
    if (rid < 0 || rid >= static_cast<int>(scenario.regimes.size()))
      throw ValueError("generate_stream: schedule references regime " +
                       std::to_string(rid) + " of " +
                       std::to_string(scenario.regimes.size()));
    const Regime& regime = scenario.regimes[static_cast<size_t>(rid)];
    DayBatch day;
    day.date = t;
    day.features = Matrix(symbols, d);
    Vector y(symbols);
    for (int s = 0; s < symbols; ++s) {
      for (int k = 0; k < d; ++k) {
        double v = rng.normal();
        if (regime.feature_shift.size() == d) v += regime.feature_shift(k);
        day.features(s, k) = v;
      }
      double label = day.features.row(s).dot(regime.w) + regime.bias;
      if (regime.sigma > 0.0) label += regime.sigma * rng.normal();
      y(s) = label;
    }
    day.labels = std::move(y);
    day.symbols.resize(static_cast<size_t>(symbols));
    for (int s = 0; s < symbols; ++s) {
      std::snprintf(name, sizeof(name), "s%04d", s);
      day.symbols[static_cast<size_t>(s)] = name;
    }
    out.days.push_back(std::move(day));
    out.regime_log.push_back(rid);
  }
  return out;
}

DriftScenario build_scenario(const ScenarioSpec& spec, uint64_t seed) {
  if (spec.num_regimes < 1)
    throw ConfigError("scenario: num_regimes must be positive");
  if (spec.t_ada < 1) throw ConfigError("scenario: t_ada must be positive");
  if (spec.period_windows < 1)
    throw ConfigError("scenario: period_windows must be positive");
  const int windows = (spec.dates + spec.t_ada - 1) / spec.t_ada;

  DriftScenario sc;
  sc.kind = spec.kind;
  sc.seed = seed;
  Rng rng = derive_rng(seed, "scenario");
  const double wscale = 1.0 / std::sqrt(static_cast<double>(spec.features));

  auto sample_regime = [&]() {
    Regime r;
    r.w = Vector(spec.features);
    for (int k = 0; k < spec.features; ++k)
      r.w(k) = rng.uniform(-1.0, 1.0) * wscale;
    r.bias = rng.uniform(-spec.bias_scale, spec.bias_scale);
    r.sigma = spec.sigma;
    if (spec.feature_shift != 0.0) {
      Vector dir(spec.features);
      for (int k = 0; k < spec.features; ++k) dir(k) = rng.normal();
      r.feature_shift = spec.feature_shift * dir / dir.norm();
    }
    return r;
  };

  std::vector<int> window_regime(static_cast<size_t>(windows), 0);
  switch (spec.kind) {
    case ScenarioKind::RecurringCycle: {
      if (windows < 2 * spec.num_regimes * spec.period_windows)
        throw ConfigError(
            "scenario: recurring-cycle must revisit every regime at least "
            "twice; need " +
            std::to_string(2 * spec.num_regimes * spec.period_windows *
                           spec.t_ada) +
            " dates, got " + std::to_string(spec.dates));
      for (int i = 0; i < spec.num_regimes; ++i)
        sc.regimes.push_back(sample_regime());
      for (int w = 0; w < windows; ++w)
        window_regime[static_cast<size_t>(w)] =
            (w / spec.period_windows) % spec.num_regimes;
      break;
    }
    case ScenarioKind::RandomWalk: {
      // Never-repeating drift: every window gets a freshly sampled regime.
      for (int w = 0; w < windows; ++w) {
        sc.regimes.push_back(sample_regime());
        window_regime[static_cast<size_t>(w)] = w;
      }
      break;
    }
    case ScenarioKind::Mixed: {
      for (int i = 0; i < spec.num_regimes; ++i)
        sc.regimes.push_back(sample_regime());
      int cycle_at = 0;
      for (int w = 0; w < windows; ++w) {
        if (rng.uniform() < spec.emerge_prob) {
          sc.regimes.push_back(sample_regime());
          window_regime[static_cast<size_t>(w)] =
              static_cast<int>(sc.regimes.size()) - 1;
        } else {
          window_regime[static_cast<size_t>(w)] =
              (cycle_at / spec.period_windows) % spec.num_regimes;
          ++cycle_at;
        }
      }
      break;
    }
  }

  sc.schedule.resize(static_cast<size_t>(spec.dates));
  for (int t = 0; t < spec.dates; ++t)
    sc.schedule[static_cast<size_t>(t)] =
        window_regime[static_cast<size_t>(t / spec.t_ada)];
  return sc;
}

// ---- CSV -------------------------------------------------------------------

void write_stream_csv(const std::vector<DayBatch>& days,
                      const std::string& path) {
  if (days.empty()) throw ValueError("write_stream_csv: empty stream");
  const Eigen::Index d = days.front().features.cols();
  bool any_labels = false;
  for (const DayBatch& day : days) any_labels = any_labels || day.labels.has_value();

  std::ostringstream out;
  out << "date,symbol";
  for (Eigen::Index k = 0; k < d; ++k) out << ",f" << k;
  if (any_labels) out << ",label";
  out << "\n";
  for (const DayBatch& day : days) {
    if (day.features.cols() != d)
      throw ValueError("write_stream_csv: inconsistent feature dims");
    for (Eigen::Index s = 0; s < day.features.rows(); ++s) {
      out << day.date << "," << day.symbols[static_cast<size_t>(s)];
      for (Eigen::Index k = 0; k < d; ++k)
        out << "," << format_double(day.features(s, k));
      if (any_labels) {
        out << ",";
        if (day.labels) out << format_double((*day.labels)(s));
      }
      out << "\n";
    }
  }
  write_file_atomic(path, out.str());
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace

std::vector<DayBatch> load_stream_csv(const std::string& path, bool zscore) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path);
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "date" || header[1] != "symbol")
    throw IoError("bad csv header in " + path);
  const bool has_label = header.back() == "label";
  const int d = static_cast<int>(header.size()) - 2 - (has_label ? 1 : 0);
  if (d < 1) throw IoError("csv has no feature columns: " + path);

  struct Row {
    int date;
    std::string symbol;
    std::vector<double> f;
    std::optional<double> label;
  };
  std::vector<Row> rows;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw IoError("csv row " + std::to_string(lineno) + " has " +
                    std::to_string(cells.size()) + " cells, expected " +
                    std::to_string(header.size()));
    Row r;
    r.date = std::stoi(cells[0]);
    r.symbol = cells[1];
    r.f.resize(static_cast<size_t>(d));
    for (int k = 0; k < d; ++k) r.f[static_cast<size_t>(k)] = std::stod(cells[static_cast<size_t>(k) + 2]);
    if (has_label && !cells.back().empty()) r.label = std::stod(cells.back());
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw IoError("csv has no data rows: " + path);

  if (zscore) {
    for (int k = 0; k < d; ++k) {
      double mean = 0;
      for (const Row& r : rows) mean += r.f[static_cast<size_t>(k)];
      mean /= static_cast<double>(rows.size());
      double var = 0;
      for (const Row& r : rows) {
        const double c = r.f[static_cast<size_t>(k)] - mean;
        var += c * c;
      }
      const double sd = std::sqrt(var / static_cast<double>(rows.size()));
      if (sd > 0)
        for (Row& r : rows)
          r.f[static_cast<size_t>(k)] = (r.f[static_cast<size_t>(k)] - mean) / sd;
    }
  }

  std::vector<DayBatch> days;
  size_t i = 0;
  while (i < rows.size()) {
    size_t j = i;
    while (j < rows.size() && rows[j].date == rows[i].date) ++j;
    const int n = static_cast<int>(j - i);
    DayBatch day;
    day.date = rows[i].date;
    day.features = Matrix(n, d);
    const bool day_labeled = rows[i].label.has_value();
    Vector y(n);
    for (int s = 0; s < n; ++s) {
      const Row& r = rows[i + static_cast<size_t>(s)];
      if (r.label.has_value() != day_labeled)
        throw IoError("csv date " + std::to_string(day.date) +
                      " mixes labeled and unlabeled rows");
      day.symbols.push_back(r.symbol);
      for (int k = 0; k < d; ++k) day.features(s, k) = r.f[static_cast<size_t>(k)];
      if (day_labeled) y(s) = *r.label;
    }
    if (day_labeled) day.labels = std::move(y);
    days.push_back(std::move(day));
    i = j;
  }
  for (size_t k = 1; k < days.size(); ++k)
    if (days[k].date <= days[k - 1].date)
      throw IoError("csv dates out of order at date " +
                    std::to_string(days[k].date));
  return days;
}

void write_regime_log_csv(const std::vector<int>& regime_log,
                          const std::string& path) {
  std::ostringstream out;
  out << "date,regime_id\n";
  for (size_t t = 0; t < regime_log.size(); ++t)
    out << t << "," << regime_log[t] << "\n";
  write_file_atomic(path, out.str());
}

Matrix stack_window_features(const std::vector<DayBatch>& days) {
  if (days.empty()) throw ValueError("stack_window_features: empty window");
  Eigen::Index rows = 0;
  const Eigen::Index cols = days.front().features.cols();
  for (const DayBatch& d : days) rows += d.features.rows();
  Matrix x(rows, cols);
  Eigen::Index at = 0;
  for (const DayBatch& d : days) {
    if (d.features.cols() != cols)
      throw ShapeError("stack_window_features: ragged feature widths");
    x.middleRows(at, d.features.rows()) = d.features;
    at += d.features.rows();
  }
  return x;
}

std::pair<Matrix, Vector> stack_window_labeled(
    const std::vector<DayBatch>& days) {
  Matrix x = stack_window_features(days);
  Vector y(x.rows());
  Eigen::Index at = 0;
  for (const DayBatch& d : days) {
    if (!d.labels)
      throw ValueError("stack_window_labeled: date " +
                       std::to_string(d.date) + " has no labels");
    y.segment(at, d.labels->size()) = *d.labels;
    at += d.labels->size();
  }
  return {std::move(x), std::move(y)};
}

// ---- StreamView ------------------------------------------------------------

const DayBatch& StreamView::day(int date) const {
  if (date < 0 || date >= num_dates())
    throw ValueError("StreamView: date " + std::to_string(date) +
                     " out of range");
  return (*days_)[static_cast<size_t>(date)];
}

Vector StreamView::labels(int date) const {
  if (date >= horizon_)
    throw LookaheadError("label read at date " + std::to_string(date) +
                         " but horizon is " + std::to_string(horizon_));
  const DayBatch& d = day(date);
  if (!d.labels)
    throw ValueError("StreamView: date " + std::to_string(date) +
                     " has no labels");
  return *d.labels;
}

Matrix StreamView::stack_features(const std::vector<int>& dates) const {
  if (dates.empty()) throw ValueError("stack_features: empty date list");
  Eigen::Index rows = 0;
  const Eigen::Index cols = day(dates.front()).features.cols();
  for (int t : dates) rows += day(t).features.rows();
  Matrix x(rows, cols);
  Eigen::Index at = 0;
  for (int t : dates) {
    const Matrix& f = day(t).features;
    x.middleRows(at, f.rows()) = f;
    at += f.rows();
  }
  return x;
}

std::pair<Matrix, Vector> StreamView::stack_labeled(
    const std::vector<int>& dates) const {
  Matrix x = stack_features(dates);
  Vector y(x.rows());
  Eigen::Index at = 0;
  for (int t : dates) {
    const Vector l = labels(t);
    y.segment(at, l.size()) = l;
    at += l.size();
  }
  return {std::move(x), std::move(y)};
}

}  // namespace driftmeta
