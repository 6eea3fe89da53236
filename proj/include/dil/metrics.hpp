#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dil::metrics {

struct EraScore {
  int era = 0;
  double rho = 0.0;
  bool operator==(const EraScore&) const = default;
};

struct BacktestReport {
  std::vector<EraScore> scores;
  double mean_corr = 0.0;
  double std_corr = 0.0;  // population
  std::optional<double> sharpe;
  std::optional<double> calmar;
  double max_drawdown = 0.0;
};

/// Per-era correlation score. Predictions are ranked to (0,1) with average ties,
/// mapped through the inverse normal CDF, both sides get the signed 1.5 power, and the
/// Pearson correlation of the two transformed vectors is returned.
/// Throws DegenerateInput on zero variance (e.g. constant predictions) or N < 3.
double era_score(std::span<const double> predictions, std::span<const double> targets);

/// Largest gap between the running peak of the cumulative score (starting flat at 0)
/// and the cumulative score itself.
double max_drawdown(std::span<const double> scores);

/// Aggregates per-era scores; needs at least two eras.
BacktestReport report(std::vector<EraScore> scores);

/// `era,rho` per line.
void write_scores_csv(const std::filesystem::path& path, std::span<const EraScore> scores);

struct SummaryRow {
  std::string strategy;
  BacktestReport report;
};

/// `strategy,mean_corr,sharpe,calmar,max_drawdown`, undefined ratios left empty.
void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows);

}  // namespace dil::metrics
