#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "driftmeta/errors.hpp"
#include "driftmeta/stream.hpp"

using namespace driftmeta;

namespace {
std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("trend labels are one-step-ahead relative changes") {
  CHECK(compute_trend_labels({100.0, 110.0}) ==
        std::vector<double>{0.10000000000000001});
  const auto r = compute_trend_labels({50, 55, 44});
  REQUIRE(r.size() == 2);  // final date has no realized label
  CHECK(r[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(compute_trend_labels({7.0}).empty());
  CHECK_THROWS_AS(compute_trend_labels({1.0, 0.0, 2.0}), ValueError);
}

namespace {
std::vector<DayBatch> make_days(int n, int symbols = 2, int d = 3,
                                bool labeled = true) {
  std::vector<DayBatch> days;
  for (int t = 0; t < n; ++t) {
    DayBatch day;
    day.date = t;
    day.features = Matrix::Constant(symbols, d, t);
    for (int s = 0; s < symbols; ++s)
      day.symbols.push_back("s" + std::to_string(s));
    if (labeled) day.labels = Vector::Constant(symbols, t);
    days.push_back(day);
  }
  return days;
}
}  // namespace

TEST_CASE("segmentation window bookkeeping") {
  SUBCASE("30 dates make exactly one 15/15 task") {
    const auto tasks = segment_tasks(make_days(30), 15);
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].train.size() == 15);
    CHECK(tasks[0].test.size() == 15);
    CHECK(tasks[0].train.front().date == 0);
    CHECK(tasks[0].test.front().date == 15);
    CHECK(tasks[0].history.empty());
  }
  SUBCASE("adjacent tasks share the handoff window") {
    const auto tasks = segment_tasks(make_days(45), 15);
    REQUIRE(tasks.size() == 2);
    for (size_t i = 0; i < tasks[0].test.size(); ++i)
      CHECK(tasks[0].test[i].date == tasks[1].train[i].date);
    CHECK(tasks[1].history == std::vector<int>{0});
  }
  SUBCASE("a trailing short window still forms a task") {
    const auto tasks = segment_tasks(make_days(40), 15);
    REQUIRE(tasks.size() == 2);
    CHECK(tasks[1].train.size() == 15);
    CHECK(tasks[1].test.size() == 10);
  }
  SUBCASE("stream shorter than one window cannot form a task") {
    CHECK_THROWS_AS(segment_tasks(make_days(15), 15), ValueError);
  }
  SUBCASE("unlabeled train dates are rejected") {
    auto days = make_days(30);
    days[3].labels.reset();
    CHECK_THROWS_AS(segment_tasks(days, 15), ValueError);
  }
}

TEST_CASE("noiseless single-regime stream is exactly linear") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::RecurringCycle;
  spec.num_regimes = 1;
  spec.dates = 60;
  spec.symbols = 20;
  spec.features = 5;
  spec.sigma = 0.0;
  spec.bias_scale = 0.2;
  const DriftScenario sc = build_scenario(spec, 17);
  const GeneratedStream gs = generate_stream(sc, spec.dates, spec.symbols, spec.features);
  REQUIRE(gs.days.size() == 60);

  // Ordinary least squares on one window recovers the generator.
  const int n = 15 * spec.symbols;
  Matrix x(n, spec.features + 1);
  Vector y(n);
  int at = 0;
  for (int t = 0; t < 15; ++t) {
    for (int s = 0; s < spec.symbols; ++s, ++at) {
      x.row(at).head(spec.features) = gs.days[t].features.row(s);
      x(at, spec.features) = 1.0;
      y(at) = (*gs.days[t].labels)(s);
    }
  }
  const Vector beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  const Regime& regime = sc.regimes[0];
  for (int k = 0; k < spec.features; ++k)
    CHECK(std::abs(beta(k) - regime.w(k)) < 1e-8);
  CHECK(std::abs(beta(spec.features) - regime.bias) < 1e-8);
}

TEST_CASE("two-regime cycle alternates window by window") {
  ScenarioSpec spec;
  spec.num_regimes = 2;
  spec.dates = 90;
  spec.t_ada = 15;
  const DriftScenario sc = build_scenario(spec, 5);
  const GeneratedStream gs = generate_stream(sc, 90, 3, spec.features);
  for (int t = 0; t < 90; ++t) CHECK(gs.regime_log[t] == (t / 15) % 2);
}

TEST_CASE("recurring cycle must revisit every regime") {
  ScenarioSpec spec;
  spec.num_regimes = 3;
  spec.dates = 45;  // only one visit each
  CHECK_THROWS_AS(build_scenario(spec, 1), ConfigError);
}

TEST_CASE("random-walk schedules never repeat a regime") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::RandomWalk;
  spec.dates = 120;
  const DriftScenario sc = build_scenario(spec, 9);
  const GeneratedStream gs = generate_stream(sc, 120, 2, spec.features);
  for (int t = 15; t < 120; ++t)
    CHECK(gs.regime_log[t / 15 * 15] != gs.regime_log[(t / 15 - 1) * 15]);
}

TEST_CASE("identical scenario and seed give bit-identical streams") {
  ScenarioSpec spec;
  spec.dates = 60;
  spec.sigma = 0.3;
  spec.feature_shift = 0.5;
  const auto a = generate_stream(build_scenario(spec, 123), 60, 7, 12);
  const auto b = generate_stream(build_scenario(spec, 123), 60, 7, 12);
  REQUIRE(a.days.size() == b.days.size());
  for (size_t t = 0; t < a.days.size(); ++t) {
    CHECK((a.days[t].features.array() == b.days[t].features.array()).all());
    CHECK((a.days[t].labels->array() == b.days[t].labels->array()).all());
  }
  const auto c = generate_stream(build_scenario(spec, 124), 60, 7, 12);
  CHECK_FALSE(
      (a.days[0].features.array() == c.days[0].features.array()).all());
}

TEST_CASE("csv round-trip preserves every double bit-for-bit") {
  ScenarioSpec spec;
  spec.num_regimes = 1;
  spec.dates = 34;  // trailing unlabeled date exercised separately
  spec.features = 4;
  spec.sigma = 0.2;
  const auto gs = generate_stream(build_scenario(spec, 3), 34, 5, 4);
  auto days = gs.days;
  days.back().labels.reset();  // trailing date not yet realized
  const std::string path = temp_path("driftmeta_roundtrip.csv");
  write_stream_csv(days, path);
  const auto loaded = load_stream_csv(path);
  REQUIRE(loaded.size() == days.size());
  for (size_t t = 0; t < days.size(); ++t) {
    CHECK(loaded[t].date == days[t].date);
    CHECK(loaded[t].symbols == days[t].symbols);
    CHECK((loaded[t].features.array() == days[t].features.array()).all());
    REQUIRE(loaded[t].labels.has_value() == days[t].labels.has_value());
    if (days[t].labels)
      CHECK((loaded[t].labels->array() == days[t].labels->array()).all());
  }
  std::remove(path.c_str());
}

TEST_CASE("z-scored load standardizes feature columns") {
  ScenarioSpec spec;
  spec.num_regimes = 1;
  spec.dates = 32;
  spec.features = 3;
  const auto gs = generate_stream(build_scenario(spec, 8), 32, 6, 3);
  const std::string path = temp_path("driftmeta_zscore.csv");
  write_stream_csv(gs.days, path);
  const auto loaded = load_stream_csv(path, true);
  double mean = 0, var = 0;
  int n = 0;
  for (const auto& day : loaded)
    for (Eigen::Index s = 0; s < day.features.rows(); ++s, ++n)
      mean += day.features(s, 0);
  mean /= n;
  for (const auto& day : loaded)
    for (Eigen::Index s = 0; s < day.features.rows(); ++s)
      var += (day.features(s, 0) - mean) * (day.features(s, 0) - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::abs(var / n - 1.0) < 1e-12);
  std::remove(path.c_str());
}

TEST_CASE("label reads past the horizon are lookahead errors") {
  const auto days = make_days(30);
  StreamView view(&days);
  view.set_label_horizon(15);
  CHECK(view.labels(14)(0) == doctest::Approx(14.0));
  CHECK_THROWS_AS(view.labels(15), LookaheadError);
  CHECK_THROWS_AS(view.labels(29), LookaheadError);
  auto [x, y] = view.stack_labeled({0, 1, 2});
  CHECK(x.rows() == 6);
  CHECK(y.size() == 6);
  view.set_label_horizon(30);
  CHECK_NOTHROW(view.labels(29));
}
