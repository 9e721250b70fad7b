#include "driftmeta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "driftmeta/errors.hpp"

namespace driftmeta {

namespace {

// Mean and sample (n-1) standard deviation.
std::pair<double, std::optional<double>> mean_std(
    const std::vector<double>& xs) {
  const size_t n = xs.size();
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) /
                      static_cast<double>(n);
  if (n < 2) return {mean, std::nullopt};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) return {mean, std::nullopt};
  return {mean, sd};
}

}  // namespace

std::optional<double> pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw ShapeError("pearson: length mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  if (a.size() < 2) throw ValueError("pearson: need at least 2 points");
  const double ma = a.mean(), mb = b.mean();
  double sab = 0, saa = 0, sbb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double da = a(i) - ma, db = b(i) - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> average_ranks(const Vector& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return v(i) < v(j); });
  std::vector<double> ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
    const double avg = (i + j) / 2.0 + 1.0;  // 1-based positions i..j
    for (int k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw ShapeError("spearman: length mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  if (a.size() < 2) throw ValueError("spearman: need at least 2 points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  Vector va = Eigen::Map<const Vector>(ra.data(), static_cast<Eigen::Index>(ra.size()));
  Vector vb = Eigen::Map<const Vector>(rb.data(), static_cast<Eigen::Index>(rb.size()));
  return pearson(va, vb);
}

std::vector<DailyEval> ic_series(const std::vector<int>& dates,
                                 const std::vector<Vector>& scores,
                                 const std::vector<Vector>& trends) {
  if (dates.size() != scores.size() || dates.size() != trends.size()) {
    throw ShapeError("ic_series: dates, scores, trends must align");
  }
  if (dates.empty()) throw ValueError("ic_series: no dates");
  std::vector<DailyEval> out;
  out.reserve(dates.size());
  for (size_t i = 0; i < dates.size(); ++i) {
    DailyEval d;
    d.date = dates[i];
    d.ic = pearson(scores[i], trends[i]);
    d.ric = spearman(scores[i], trends[i]);
    out.push_back(std::move(d));
  }
  return out;
}

IcSummary summarize_ic(const std::vector<DailyEval>& days) {
  IcSummary s;
  s.days = static_cast<int>(days.size());
  std::vector<double> ics, rics;
  for (const DailyEval& d : days) {
    if (d.ic) ics.push_back(*d.ic); else ++s.days_ic_undefined;
    if (d.ric) rics.push_back(*d.ric); else ++s.days_ric_undefined;
  }
  if (ics.empty() && rics.empty()) {
    throw ValueError("summarize_ic: correlation undefined on every day");
  }
  if (!ics.empty()) {
    auto [m, sd] = mean_std(ics);
    s.ic = m;
    if (sd) s.icir = m / *sd;
  }
  if (!rics.empty()) {
    auto [m, sd] = mean_std(rics);
    s.ric = m;
    if (sd) s.ricir = m / *sd;
  }
  return s;
}

PortfolioSummary topk_portfolio(const std::vector<int>& dates,
                                const std::vector<Vector>& scores,
                                const std::vector<Vector>& trends, int k) {
  if (dates.size() != scores.size() || dates.size() != trends.size()) {
    throw ShapeError("topk_portfolio: dates, scores, trends must align");
  }
  if (k < 1) throw ValueError("topk_portfolio: k must be >= 1");
  if (dates.empty()) throw ValueError("topk_portfolio: no dates");
  PortfolioSummary out;
  out.daily_excess.reserve(dates.size());
  for (size_t i = 0; i < dates.size(); ++i) {
    const Vector& sc = scores[i];
    const Vector& tr = trends[i];
    if (sc.size() != tr.size()) {
      throw ShapeError("topk_portfolio: score/trend mismatch at date " +
                       std::to_string(dates[i]));
    }
    const int n = static_cast<int>(sc.size());
    if (k > n) {
      throw ValueError("topk_portfolio: k=" + std::to_string(k) +
                       " exceeds universe of " + std::to_string(n) +
                       " at date " + std::to_string(dates[i]));
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    // descending by score; ties broken by symbol position for determinism
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sc(a) > sc(b); });
    double top = 0.0;
    for (int j = 0; j < k; ++j) top += tr(order[j]);
    top /= k;
    out.daily_excess.push_back(top - tr.mean());
  }
  auto [m, sd] = mean_std(out.daily_excess);
  out.ear = 252.0 * m;
  if (sd) out.earir = m / *sd * std::sqrt(252.0);
  return out;
}

double percentile(std::vector<double> xs, double pct) {
  if (xs.empty()) throw ValueError("percentile: empty sample");
  if (pct < 0.0 || pct > 100.0)
    throw ValueError("percentile: pct must be in [0, 100]");
  std::sort(xs.begin(), xs.end());
  const double rank = pct / 100.0 * static_cast<double>(xs.size() - 1);
  const size_t lo = static_cast<size_t>(rank);
  if (lo + 1 >= xs.size()) return xs.back();
  const double frac = rank - static_cast<double>(lo);
  return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

FriedmanResult friedman_ranks(
    const std::vector<std::vector<double>>& scores) {
  const size_t k = scores.size();
  if (k < 2) throw ValueError("friedman_ranks: need at least 2 methods");
  const size_t n = scores[0].size();
  for (const auto& row : scores) {
    if (row.size() != n) throw ShapeError("friedman_ranks: ragged table");
  }
  if (n < 2) throw ValueError("friedman_ranks: need at least 2 scenarios");

  FriedmanResult out;
  out.avg_ranks.assign(k, 0.0);
  for (size_t s = 0; s < n; ++s) {
    // higher score = better = lower rank, so rank the negated column
    Vector col(static_cast<Eigen::Index>(k));
    for (size_t m = 0; m < k; ++m) col(static_cast<Eigen::Index>(m)) = -scores[m][s];
    const auto ranks = average_ranks(col);
    for (size_t m = 0; m < k; ++m) out.avg_ranks[m] += ranks[m];
  }
  for (double& r : out.avg_ranks) r /= static_cast<double>(n);

  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  double acc = 0.0;
  for (double r : out.avg_ranks) {
    const double d = r - (kk + 1.0) / 2.0;
    acc += d * d;
  }
  out.chi_square = 12.0 * nn / (kk * (kk + 1.0)) * acc;
  return out;
}

}  // namespace driftmeta
