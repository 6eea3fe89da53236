#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dil/dataset.hpp"
#include "dil/gbdt.hpp"
#include "dil/hedging.hpp"
#include "dil/prediction.hpp"

namespace dil::deep_il {

/// Closed era interval [first, last].
struct EraInterval {
  int first = 0;
  int last = 0;
  int length() const noexcept { return last - first + 1; }
  bool contains(int era) const noexcept { return era >= first && era <= last; }
  bool operator==(const EraInterval&) const = default;
};

/// Window of layer l (1-based) when layers of sizes a are stacked with b embargo eras
/// between them: eras (S, S + a_l] with S = sum over earlier layers of (a_w + b).
EraInterval layer_window(int layer, std::span<const int> lookbacks, int embargo);

/// start, start + period, ... up to end. Each entry's model serves (entry, next entry].
std::vector<int> retrain_schedule(int start, int end, int period);

enum class LayerInput { RawFeatures, PriorPredictions, Both };

struct ModelRecipe {
  std::string id;
  gbdt::Hyperparams hyperparams;
  dataset::SamplingScheme row_sampling;
  dataset::FeatureSampleSpec feature_sample;
  std::size_t target_index = 0;
  int lookback = 0;     // training eras; 0 uses the layer lookback
  bool retrain = true;  // false: trained at the first retrain era only and kept
};

struct LayerSpec {
  int lookback = 585;
  std::vector<ModelRecipe> recipes;
  LayerInput input = LayerInput::RawFeatures;
  int retrain_period = 50;
  int embargo = 15;

  void validate() const;
};

// ---- recipe builders -------------------------------------------------------------------

/// Lookbacks a * (1, .875, .75, .625, .5) with budgets scaled by the same ratios and
/// learning rates 50 / budget.
std::vector<ModelRecipe> training_size_recipes(int boosting_rounds, int lookback, std::uint64_t seed,
                                               std::size_t target_index = 0);

/// Budgets (B/4, B/2, B, 2B, 4B) with learning rates 50 / budget. Budgets above B are
/// trained once unless `retrain_large` is set.
std::vector<ModelRecipe> learning_rate_recipes(int boosting_rounds, std::uint64_t seed, std::size_t target_index = 0,
                                               bool retrain_large = false);

/// One Ansatz model per target.
std::vector<ModelRecipe> target_recipes(int boosting_rounds, std::uint64_t seed, std::size_t target_count);

/// Every target crossed with the learning-rate ladder.
std::vector<ModelRecipe> target_learning_rate_recipes(int boosting_rounds, std::uint64_t seed,
                                                      std::size_t target_count, bool retrain_large = false);

/// One Ansatz model per feature group, trained without that group.
std::vector<ModelRecipe> jackknife_recipes(int boosting_rounds, std::uint64_t seed,
                                           const std::vector<std::string>& groups, std::size_t target_index = 0);

/// `schemes` random feature subsets of the given fraction, `seeds_per_scheme` models each.
std::vector<ModelRecipe> random_feature_recipes(int boosting_rounds, std::uint64_t seed, int schemes,
                                                int seeds_per_scheme, double fraction = 0.5,
                                                std::size_t target_index = 0);

/// Replaces every recipe by `stride` copies trained on disjoint regular era subsets.
std::vector<ModelRecipe> expand_era_stride(const std::vector<ModelRecipe>& recipes, int stride);

// ---- training --------------------------------------------------------------------------

struct TrainedModel {
  std::string recipe_id;
  int layer = 1;
  int as_of_era = 0;
  EraInterval training_eras;
  std::vector<int> eras_used;              // after era sampling
  std::vector<std::size_t> feature_set;    // columns of the layer design matrix
  gbdt::Model model;
};

/// Trains every recipe of a raw-feature layer on (as_of - b - a, as_of - b].
std::vector<TrainedModel> train_layer1(const dataset::TemporalTabularDataset& data, const LayerSpec& spec,
                                       int as_of_era, int threads = 1);

// ---- combining -------------------------------------------------------------------------

enum class CombinerKind { EqualWeighted, NonNegativeRidge };

struct Combiner {
  CombinerKind kind = CombinerKind::EqualWeighted;
  double alpha = 1e-4;
  int window = 25;
  int embargo = 6;

  void validate() const;
};

struct NonNegativeRidgeFit {
  std::vector<double> weights;
  double kkt_residual = 0.0;
  bool all_zero = false;
};

/// Minimises |R w - y|^2 + alpha |w|^2 subject to w >= 0, R is rows x K.
NonNegativeRidgeFit nonneg_ridge(const Matrix<double>& r, std::span<const double> y, double alpha);

/// Largest violation of the optimality conditions of the problem above at w.
double kkt_residual(const Matrix<double>& r, std::span<const double> y, double alpha, std::span<const double> w);

struct CombineResult {
  std::vector<double> scores;
  std::vector<double> weights;  // per member; uniform for EqualWeighted
  double kkt_residual = 0.0;
  bool fell_back = false;  // NonNegativeRidge produced all-zero weights
};

/// Combines member predictions for `era`. NonNegativeRidge fits on the pooled rows of eras
/// (era - 1 - embargo - window, era - 1 - embargo] against the scoring target.
CombineResult combine(std::span<const PredictionSeries> members, const Combiner& combiner, int era,
                      const dataset::TemporalTabularDataset& data, std::size_t scoring_target);

// ---- orchestration ---------------------------------------------------------------------

struct DeepIlPlan {
  std::vector<LayerSpec> layers;
  std::vector<Combiner> combiners;
  std::optional<hedging::HedgeConfig> hedge;
  std::size_t scoring_target = 0;

  void validate() const;
};

struct Diagnostics {
  std::vector<int> combiner_fallback_eras;      // NonNegativeRidge fell back to equal weights
  std::vector<int> hedge_insufficient_eras;     // dynamic hedge used h = 0 for lack of history
  std::vector<int> tail_degenerate_eras;        // tail signal had no spread, era left unscored
  std::map<int, double> hedge_ratios;           // era -> h
  double max_kkt_residual = 0.0;
};

struct DeepIlResult {
  std::map<std::string, PredictionSeries> strategies;
  std::vector<TrainedModel> models;
  Diagnostics diagnostics;
};

/// Strategy names: "layer<l>/<recipe id>" for each model series, "equal_weighted" and
/// "nonneg_ridge" for the combiners over the last layer, and with a hedge config
/// "baseline", "tail_risk", "static_hedged", "dynamic_hedged". Layer 1 starts retraining
/// at `start`; deeper layers at the first era whose window is covered by the layer below.
DeepIlResult run_deep_il(const dataset::TemporalTabularDataset& data, const DeepIlPlan& plan, int start, int end,
                         int threads = 1);

/// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first failure by index.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace dil::deep_il
