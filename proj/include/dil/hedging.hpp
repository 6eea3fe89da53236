#pragma once

#include <span>
#include <vector>

#include "dil/core.hpp"
#include "dil/metrics.hpp"

namespace dil::hedging {

struct HedgeConfig {
  double static_baseline_weight = 0.6;
  double static_tail_weight = 0.4;
  double dynamic_ratio = 0.6;  // tail weight when the trailing tail score is >= threshold
  int trailing_window = 50;
  int trailing_lag = 7;
  double threshold = 0.0;

  void validate() const;
};

struct DisagreementSignals {
  std::vector<double> baseline;  // rank of the mean member rank, in (-0.5, 0.5)
  std::vector<double> tail;      // rank of the per-row member dispersion, in (-0.5, 0.5)
};

/// Members are K >= 2 aligned prediction vectors for the same rows. Each member is
/// rank-normalised first, so the result only depends on member ranks.
DisagreementSignals disagreement_signals(std::span<const std::vector<double>> members);

struct HedgeDecision {
  double ratio = 0.0;          // h
  double trailing_mean = 0.0;  // mean tail score over the lagged window (0 when insufficient)
  int eras_used = 0;
  bool insufficient_history = false;
};

/// Tail scores for eras era-lag-window+1 .. era-lag (era-56 .. era-7 by default) are
/// averaged; h = dynamic_ratio when the mean is >= threshold, otherwise 0. With fewer
/// than `trailing_window` of those eras present the ratio is 0 and the flag is set.
HedgeDecision hedge_ratio(std::span<const metrics::EraScore> tail_history, int era, const HedgeConfig& cfg = {});

struct DynamicHedge {
  std::vector<double> scores;  // (1 - h) baseline + h tail
  HedgeDecision decision;
};

DynamicHedge dynamic_hedge(std::span<const double> baseline, std::span<const double> tail,
                           std::span<const metrics::EraScore> tail_history, int era, const HedgeConfig& cfg = {});

/// static_baseline_weight * baseline + static_tail_weight * tail.
std::vector<double> static_hedge(std::span<const double> baseline, std::span<const double> tail,
                                 const HedgeConfig& cfg = {});

}  // namespace dil::hedging
