#pragma once

#include <optional>
#include <vector>

#include "driftmeta/autodiff.hpp"

namespace driftmeta {

// Correlations return nullopt when undefined (a constant input vector).
// Undefined days are excluded from averages and counted, never coerced to 0.
std::optional<double> pearson(const Vector& a, const Vector& b);
std::optional<double> spearman(const Vector& a, const Vector& b);

// 1-based ranks with ties sharing the average of their positions.
std::vector<double> average_ranks(const Vector& v);

struct DailyEval {
  int date = 0;
  std::optional<double> ic;
  std::optional<double> ric;
};

struct IcSummary {
  double ic = 0.0;    // mean over days where defined
  double ric = 0.0;
  std::optional<double> icir;   // mean/std, sample std; nullopt if undefined
  std::optional<double> ricir;
  int days = 0;
  int days_ic_undefined = 0;
  int days_ric_undefined = 0;
};

// Per-date correlations between scores and realized trends plus aggregates.
// Throws if every day is undefined.
std::vector<DailyEval> ic_series(const std::vector<int>& dates,
                                 const std::vector<Vector>& scores,
                                 const std::vector<Vector>& trends);
IcSummary summarize_ic(const std::vector<DailyEval>& days);

struct PortfolioSummary {
  std::vector<double> daily_excess;  // top-k mean trend minus universe mean
  double ear = 0.0;                  // 252 * mean(excess)
  std::optional<double> earir;       // mean/std * sqrt(252)
};

// Equal-weight top-k by predicted score against the equal-weight universe.
// Simplified portfolio: no holding or turnover mechanics.
PortfolioSummary topk_portfolio(const std::vector<int>& dates,
                                const std::vector<Vector>& scores,
                                const std::vector<Vector>& trends, int k);

// Percentile with linear interpolation between order statistics (the
// convention numpy calls "linear"): rank = pct/100 * (n-1).
double percentile(std::vector<double> xs, double pct);

struct FriedmanResult {
  std::vector<double> avg_ranks;  // one per method, rank 1 = best
  double chi_square = 0.0;
};

// scores[method][scenario], higher is better. Requires >= 2 methods and
// >= 2 scenarios and a rectangular table.
FriedmanResult friedman_ranks(const std::vector<std::vector<double>>& scores);

}  // namespace driftmeta
