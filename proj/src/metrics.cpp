#include "dil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dil/core.hpp"
#include "dil/stats.hpp"

namespace dil::metrics {

namespace {

double signed_pow15(double v) { return std::copysign(std::pow(std::abs(v), 1.5), v); }

}  // namespace

double era_score(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw Error(Errc::DimensionMismatch, "era_score: length mismatch");
  if (predictions.size() < 3) throw Error(Errc::DegenerateInput, "era_score needs at least 3 rows");
  for (double p : predictions)
    if (!std::isfinite(p)) throw Error(Errc::DegenerateInput, "era_score: non-finite prediction");

  const auto ranked = stats::percentile_rank(predictions);
  std::vector<double> gauss(ranked.size());
  std::vector<double> target15(targets.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    gauss[i] = signed_pow15(stats::inverse_normal_cdf(ranked[i]));
    target15[i] = signed_pow15(targets[i]);
  }
  const auto rho = stats::pearson(gauss, target15);
  if (!rho) throw Error(Errc::DegenerateInput, "era_score: zero variance in predictions or targets");
  return *rho;
}

double max_drawdown(std::span<const double> scores) {
  if (scores.empty()) throw Error(Errc::InvalidArgument, "max_drawdown of empty sequence");
  double cumulative = 0.0;
  double peak = 0.0;
  double worst = 0.0;
  for (double s : scores) {
    cumulative += s;
    peak = std::max(peak, cumulative);
    worst = std::max(worst, peak - cumulative);
  }
  return worst;
}

BacktestReport report(std::vector<EraScore> scores) {
  if (scores.size() < 2) throw Error(Errc::TooFewEras, "report needs at least 2 eras");
  BacktestReport out;
  std::vector<double> rho;
  rho.reserve(scores.size());
  for (const auto& s : scores) rho.push_back(s.rho);
  out.mean_corr = stats::mean(rho);
  out.std_corr = stats::population_std(rho);
  out.max_drawdown = max_drawdown(rho);
  if (out.std_corr > 0.0) out.sharpe = out.mean_corr / out.std_corr;
  if (out.max_drawdown > 0.0) out.calmar = out.mean_corr / out.max_drawdown;
  out.scores = std::move(scores);
  return out;
}

void write_scores_csv(const std::filesystem::path& path, std::span<const EraScore> scores) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::MalformedFile, "cannot write " + path.string());
  out << "era,rho\n";
  for (const auto& s : scores) out << s.era << ',' << format_double(s.rho) << '\n';
}

void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::MalformedFile, "cannot write " + path.string());
  out << "strategy,mean_corr,sharpe,calmar,max_drawdown\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.strategy << ',' << format_double(r.mean_corr) << ',' << opt(r.sharpe) << ',' << opt(r.calmar) << ','
        << format_double(r.max_drawdown) << '\n';
  }
}

}  // namespace dil::metrics
