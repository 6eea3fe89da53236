#include "dil/hedging.hpp"

#include <string>

#include "dil/core.hpp"
#include "dil/stats.hpp"

namespace dil::hedging {

namespace {

bool unit_interval(double w) { return w >= 0.0 && w <= 1.0; }

std::vector<double> blend(std::span<const double> a, std::span<const double> b, double wa, double wb) {
  if (a.size() != b.size())
    throw Error(Errc::DimensionMismatch, "hedge inputs have " + std::to_string(a.size()) + " and " +
                                             std::to_string(b.size()) + " rows");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
  return out;
}

}  // namespace

void HedgeConfig::validate() const {
  if (!unit_interval(static_baseline_weight) || !unit_interval(static_tail_weight) || !unit_interval(dynamic_ratio))
    throw Error(Errc::InvalidConfig, "hedge weights must lie in [0,1]");
  if (trailing_window < 1) throw Error(Errc::InvalidConfig, "trailing window must be >= 1");
  if (trailing_lag < 0) throw Error(Errc::InvalidConfig, "trailing lag must be >= 0");
}

DisagreementSignals disagreement_signals(std::span<const std::vector<double>> members) {
  if (members.size() < 2)
    throw Error(Errc::TooFewMembers, "disagreement signals need at least 2 members, got " +
                                         std::to_string(members.size()));
  const std::size_t n = members.front().size();
  // With doubled rank positions p (exact integers), the mean member rank orders like
  // sum p and the population variance like K sum p^2 - (sum p)^2, so both signals can be
  // ranked without rounding and true ties stay tied.
  std::vector<std::int64_t> sum(n, 0), sum_sq(n, 0);
  for (const auto& m : members) {
    if (m.size() != n) throw Error(Errc::DimensionMismatch, "members are not aligned");
    const auto pos = stats::doubled_positions(m);
    for (std::size_t i = 0; i < n; ++i) {
      sum[i] += pos[i];
      sum_sq[i] += pos[i] * pos[i];
    }
  }
  const auto k = static_cast<std::int64_t>(members.size());
  std::vector<std::int64_t> spread(n);
  for (std::size_t i = 0; i < n; ++i) spread[i] = k * sum_sq[i] - sum[i] * sum[i];
  DisagreementSignals out{stats::percentile_rank(sum), stats::percentile_rank(spread)};
  for (auto& v : out.baseline) v -= 0.5;
  for (auto& v : out.tail) v -= 0.5;
  return out;
}

HedgeDecision hedge_ratio(std::span<const metrics::EraScore> tail_history, int era, const HedgeConfig& cfg) {
  cfg.validate();
  const int last = era - cfg.trailing_lag;
  const int first = last - cfg.trailing_window + 1;
  double sum = 0.0;
  int used = 0;
  for (const auto& s : tail_history) {
    if (s.era < first || s.era > last) continue;
    sum += s.rho;
    ++used;
  }
  HedgeDecision d;
  d.eras_used = used;
  if (used < cfg.trailing_window) {
    d.insufficient_history = true;
    return d;
  }
  d.trailing_mean = sum / static_cast<double>(used);
  d.ratio = d.trailing_mean >= cfg.threshold ? cfg.dynamic_ratio : 0.0;
  return d;
}

DynamicHedge dynamic_hedge(std::span<const double> baseline, std::span<const double> tail,
                           std::span<const metrics::EraScore> tail_history, int era, const HedgeConfig& cfg) {
  DynamicHedge out;
  out.decision = hedge_ratio(tail_history, era, cfg);
  const double h = out.decision.ratio;
  out.scores = blend(baseline, tail, 1.0 - h, h);
  return out;
}

std::vector<double> static_hedge(std::span<const double> baseline, std::span<const double> tail,
                                 const HedgeConfig& cfg) {
  cfg.validate();
  return blend(baseline, tail, cfg.static_baseline_weight, cfg.static_tail_weight);
}

}  // namespace dil::hedging
