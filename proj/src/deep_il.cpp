#include "dil/deep_il.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include <Eigen/Dense>

#include "dil/metrics.hpp"
#include "dil/rng.hpp"
#include "dil/stats.hpp"

namespace dil::deep_il {

namespace {

constexpr double kRatios[5] = {1.0, 0.875, 0.75, 0.625, 0.5};

std::uint64_t recipe_seed(std::uint64_t seed, const std::string& id) { return derive_seed(seed, stable_hash(id)); }

ModelRecipe ansatz_recipe(std::string id, int budget, std::uint64_t seed, std::size_t target_index) {
  ModelRecipe r;
  r.hyperparams = gbdt::ansatz_hyperparams(budget, recipe_seed(seed, id));
  r.target_index = target_index;
  r.id = std::move(id);
  return r;
}

std::vector<int> ladder_budgets(int b) {
  if (b < 4) throw Error(Errc::InvalidConfig, "learning-rate ladder needs B >= 4");
  return {b / 4, b / 2, b, 2 * b, 4 * b};
}

// Prior-layer predictions enter deeper layers as 5 equal-width bins of their centred rank,
// coded -2..2 like the raw features.
std::int8_t rank_bin(double centred) {
  const int b = std::clamp(static_cast<int>(std::floor((centred + 0.5) * 5.0)), 0, 4);
  return static_cast<std::int8_t>(b - 2);
}

/// Assembles layer design rows: raw feature columns (unless the layer takes predictions
/// only) followed by one binned column per prior-layer member.
class DesignBuilder {
 public:
  DesignBuilder(const dataset::TemporalTabularDataset& data, LayerInput input,
                const std::vector<PredictionSeries>* prior)
      : data_(data), use_raw_(input != LayerInput::PriorPredictions) {
    raw_width_ = use_raw_ ? data.feature_count() : 0;
    if (input == LayerInput::RawFeatures || prior == nullptr) return;
    prior_width_ = prior->size();
    for (const auto& block : data.eras) {
      bool covered = !prior->empty();
      for (const auto& s : *prior) covered = covered && s.covers(block.era);
      if (!covered) continue;
      Matrix<std::int8_t> bins(block.size(), prior_width_);
      for (std::size_t k = 0; k < prior_width_; ++k) {
        const auto& pred = *(*prior)[k].find(block.era);
        if (pred.scores.size() != block.size())
          throw Error(Errc::DimensionMismatch, "prior predictions misaligned at era " + std::to_string(block.era));
        const auto ranks = stats::centred_rank(pred.scores);
        for (std::size_t i = 0; i < block.size(); ++i) bins(i, k) = rank_bin(ranks[i]);
      }
      prior_bins_.emplace(block.era, std::move(bins));
    }
  }

  std::size_t width() const noexcept { return raw_width_ + prior_width_; }

  std::vector<std::size_t> feature_set(const dataset::FeatureSampleSpec& sample) const {
    std::vector<std::size_t> cols;
    if (use_raw_) cols = dataset::resolve_feature_sample(sample, data_);
    for (std::size_t k = 0; k < prior_width_; ++k) cols.push_back(raw_width_ + k);
    return cols;
  }

  void append(const dataset::EraBlock& block, std::span<const std::size_t> rows, Matrix<std::int8_t>& out) const {
    const Matrix<std::int8_t>* bins = nullptr;
    if (prior_width_ > 0) {
      auto it = prior_bins_.find(block.era);
      if (it == prior_bins_.end())
        throw Error(Errc::WindowNotCovered, "no prior-layer predictions for era " + std::to_string(block.era));
      bins = &it->second;
    }
    std::vector<std::int8_t> row(width());
    for (auto i : rows) {
      if (use_raw_) std::copy_n(block.features.row(i).begin(), raw_width_, row.begin());
      if (bins) std::copy_n(bins->row(i).begin(), prior_width_, row.begin() + static_cast<std::ptrdiff_t>(raw_width_));
      out.append_row(row);
    }
  }

  Matrix<std::int8_t> era_matrix(const dataset::EraBlock& block) const {
    std::vector<std::size_t> rows(block.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    Matrix<std::int8_t> out(0, width());
    out.reserve_rows(rows.size());
    append(block, rows, out);
    return out;
  }

 private:
  const dataset::TemporalTabularDataset& data_;
  bool use_raw_;
  std::size_t raw_width_ = 0;
  std::size_t prior_width_ = 0;
  std::map<int, Matrix<std::int8_t>> prior_bins_;
};

TrainedModel train_recipe(const dataset::TemporalTabularDataset& data, const DesignBuilder& builder,
                          const LayerSpec& spec, const ModelRecipe& recipe, int layer, int as_of) {
  const int lookback = recipe.lookback > 0 ? recipe.lookback : spec.lookback;
  TrainedModel out;
  out.recipe_id = recipe.id;
  out.layer = layer;
  out.as_of_era = as_of;
  out.training_eras = {as_of - spec.embargo - lookback + 1, as_of - spec.embargo};
  if (data.eras.empty() || out.training_eras.first < data.eras.front().era)
    throw Error(Errc::InsufficientHistory, "recipe " + recipe.id + " at era " + std::to_string(as_of) +
                                               " needs eras from " + std::to_string(out.training_eras.first));

  std::vector<int> available;
  for (const auto& block : data.eras)
    if (out.training_eras.contains(block.era)) available.push_back(block.era);
  out.eras_used = dataset::select_training_eras(available, recipe.row_sampling.era_stride,
                                                recipe.row_sampling.era_offset);
  if (out.eras_used.empty())
    throw Error(Errc::InsufficientHistory, "recipe " + recipe.id + " has no training eras at " + std::to_string(as_of));

  Matrix<std::int8_t> x(0, builder.width());
  std::vector<double> y;
  for (int era : out.eras_used) {
    const auto& block = data.era(era);
    const auto rows = dataset::row_sample_indices(block, recipe.row_sampling, recipe.target_index);
    builder.append(block, rows, x);
    for (auto i : rows) y.push_back(block.targets(i, recipe.target_index));
  }
  out.feature_set = builder.feature_set(recipe.feature_sample);
  out.model = gbdt::fit(x, y, recipe.hyperparams, out.feature_set);
  return out;
}

struct TrainTask {
  std::size_t recipe = 0;
  std::size_t slot = 0;  // index into the layer schedule
};

struct TaskOutput {
  TrainedModel trained;
  std::map<int, EraPrediction> predictions;
};

std::vector<double> member_ranks(const PredictionSeries& s, int era) {
  const auto* pred = s.find(era);
  if (!pred) throw Error(Errc::WindowNotCovered, s.model_id + " has no predictions for era " + std::to_string(era));
  return stats::centred_rank(pred->scores);
}

std::string unique_name(const std::map<std::string, PredictionSeries>& taken, const std::string& base) {
  if (!taken.count(base)) return base;
  for (int k = 2;; ++k) {
    auto name = base + "_" + std::to_string(k);
    if (!taken.count(name)) return name;
  }
}

}  // namespace

EraInterval layer_window(int layer, std::span<const int> lookbacks, int embargo) {
  if (layer < 1 || static_cast<std::size_t>(layer) > lookbacks.size())
    throw Error(Errc::OutOfRange, "layer " + std::to_string(layer) + " of " + std::to_string(lookbacks.size()));
  if (embargo < 0) throw Error(Errc::InvalidArgument, "embargo must be >= 0");
  int offset = 0;
  for (int w = 0; w < layer - 1; ++w) offset += lookbacks[static_cast<std::size_t>(w)] + embargo;
  const int a = lookbacks[static_cast<std::size_t>(layer - 1)];
  if (a < 1) throw Error(Errc::InvalidArgument, "layer lookback must be >= 1");
  return {offset + 1, offset + a};
}

std::vector<int> retrain_schedule(int start, int end, int period) {
  if (period < 1) throw Error(Errc::InvalidArgument, "retrain period must be >= 1");
  if (start > end) throw Error(Errc::InvalidArgument, "retrain schedule start after end");
  std::vector<int> out;
  for (int d = start; d <= end; d += period) out.push_back(d);
  return out;
}

void LayerSpec::validate() const {
  if (lookback < 1) throw Error(Errc::InvalidConfig, "layer lookback must be >= 1");
  if (recipes.empty()) throw Error(Errc::InvalidConfig, "layer needs at least one model recipe");
  if (retrain_period < 1) throw Error(Errc::InvalidConfig, "retrain period must be >= 1");
  if (embargo < 0) throw Error(Errc::InvalidConfig, "embargo must be >= 0");
  std::set<std::string> ids;
  for (const auto& r : recipes) {
    if (r.id.empty()) throw Error(Errc::InvalidConfig, "recipe id must not be empty");
    if (!ids.insert(r.id).second) throw Error(Errc::InvalidConfig, "duplicate recipe id " + r.id);
    if (r.lookback < 0) throw Error(Errc::InvalidConfig, "recipe lookback must be >= 0");
    r.hyperparams.validate();
    r.row_sampling.validate();
  }
}

void Combiner::validate() const {
  if (!(alpha > 0.0)) throw Error(Errc::InvalidConfig, "combiner alpha must be > 0");
  if (window < 2) throw Error(Errc::InvalidConfig, "combiner window must be >= 2");
  if (embargo < 0) throw Error(Errc::InvalidConfig, "combiner embargo must be >= 0");
}

void DeepIlPlan::validate() const {
  if (layers.empty()) throw Error(Errc::InvalidConfig, "plan needs at least one layer");
  if (layers.front().input != LayerInput::RawFeatures)
    throw Error(Errc::InvalidConfig, "the first layer can only use raw features");
  for (const auto& l : layers) l.validate();
  for (const auto& c : combiners) c.validate();
  if (hedge) hedge->validate();
}

// ---- recipe builders -------------------------------------------------------------------

std::vector<ModelRecipe> training_size_recipes(int boosting_rounds, int lookback, std::uint64_t seed,
                                               std::size_t target_index) {
  if (boosting_rounds < 1 || lookback < 1) throw Error(Errc::InvalidConfig, "training sizes need B >= 1 and a >= 1");
  std::vector<ModelRecipe> out;
  for (double r : kRatios) {
    const int a = std::max(1, static_cast<int>(std::lround(r * lookback)));
    const int b = std::max(1, static_cast<int>(std::lround(r * boosting_rounds)));
    auto recipe = ansatz_recipe("size_a" + std::to_string(a) + "_b" + std::to_string(b), b, seed, target_index);
    recipe.lookback = a;
    out.push_back(std::move(recipe));
  }
  return out;
}

std::vector<ModelRecipe> learning_rate_recipes(int boosting_rounds, std::uint64_t seed, std::size_t target_index,
                                               bool retrain_large) {
  std::vector<ModelRecipe> out;
  for (int b : ladder_budgets(boosting_rounds)) {
    auto recipe = ansatz_recipe("lr_b" + std::to_string(b), b, seed, target_index);
    recipe.retrain = retrain_large || b <= boosting_rounds;
    out.push_back(std::move(recipe));
  }
  return out;
}

std::vector<ModelRecipe> target_recipes(int boosting_rounds, std::uint64_t seed, std::size_t target_count) {
  std::vector<ModelRecipe> out;
  for (std::size_t k = 0; k < target_count; ++k)
    out.push_back(ansatz_recipe("target" + std::to_string(k), boosting_rounds, seed, k));
  return out;
}

std::vector<ModelRecipe> target_learning_rate_recipes(int boosting_rounds, std::uint64_t seed,
                                                      std::size_t target_count, bool retrain_large) {
  std::vector<ModelRecipe> out;
  for (std::size_t k = 0; k < target_count; ++k) {
    for (auto r : learning_rate_recipes(boosting_rounds, seed, k, retrain_large)) {
      r.id = "target" + std::to_string(k) + "_" + r.id;
      r.hyperparams.seed = recipe_seed(seed, r.id);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<ModelRecipe> jackknife_recipes(int boosting_rounds, std::uint64_t seed,
                                           const std::vector<std::string>& groups, std::size_t target_index) {
  std::vector<ModelRecipe> out;
  for (const auto& g : groups) {
    auto recipe = ansatz_recipe("jackknife_" + g, boosting_rounds, seed, target_index);
    recipe.feature_sample = dataset::FeatureSampleSpec::jackknife(g);
    out.push_back(std::move(recipe));
  }
  return out;
}

std::vector<ModelRecipe> random_feature_recipes(int boosting_rounds, std::uint64_t seed, int schemes,
                                                int seeds_per_scheme, double fraction, std::size_t target_index) {
  if (schemes < 1 || seeds_per_scheme < 1) throw Error(Errc::InvalidConfig, "random features need >= 1 scheme and seed");
  std::vector<ModelRecipe> out;
  for (int s = 0; s < schemes; ++s) {
    const auto feature_seed = derive_seed(seed, stable_hash("features" + std::to_string(s)));
    for (int k = 0; k < seeds_per_scheme; ++k) {
      auto recipe = ansatz_recipe("random" + std::to_string(s) + "_seed" + std::to_string(k), boosting_rounds, seed,
                                  target_index);
      recipe.feature_sample = dataset::FeatureSampleSpec::random_fraction(fraction, feature_seed);
      out.push_back(std::move(recipe));
    }
  }
  return out;
}

std::vector<ModelRecipe> expand_era_stride(const std::vector<ModelRecipe>& recipes, int stride) {
  if (stride < 1) throw Error(Errc::InvalidConfig, "era stride must be >= 1");
  if (stride == 1) return recipes;
  std::vector<ModelRecipe> out;
  for (const auto& r : recipes) {
    for (int o = 0; o < stride; ++o) {
      auto copy = r;
      copy.id = r.id + "_o" + std::to_string(o);
      copy.row_sampling.era_stride = stride;
      copy.row_sampling.era_offset = o;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

// ---- training --------------------------------------------------------------------------

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads < 1) throw Error(Errc::InvalidArgument, "threads must be >= 1");
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<TrainedModel> train_layer1(const dataset::TemporalTabularDataset& data, const LayerSpec& spec,
                                       int as_of_era, int threads) {
  spec.validate();
  if (spec.input != LayerInput::RawFeatures) throw Error(Errc::InvalidConfig, "train_layer1 needs a raw-feature layer");
  DesignBuilder builder(data, spec.input, nullptr);
  std::vector<TrainedModel> out(spec.recipes.size());
  parallel_for(spec.recipes.size(), threads, [&](std::size_t k) {
    out[k] = train_recipe(data, builder, spec, spec.recipes[k], 1, as_of_era);
  });
  return out;
}

// ---- combining -------------------------------------------------------------------------

double kkt_residual(const Matrix<double>& r, std::span<const double> y, double alpha, std::span<const double> w) {
  if (r.rows() != y.size() || r.cols() != w.size()) throw Error(Errc::DimensionMismatch, "kkt_residual shapes");
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rm(
      r.data().data(), static_cast<Eigen::Index>(r.rows()), static_cast<Eigen::Index>(r.cols()));
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  // gradient of |Rw - y|^2 + alpha |w|^2
  const Eigen::VectorXd grad = 2.0 * (rm.transpose() * (rm * wv - yv) + alpha * wv);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < wv.size(); ++k) {
    const double v = wv(k) > 0.0 ? std::abs(grad(k)) : std::max(0.0, -grad(k));
    worst = std::max({worst, v, std::max(0.0, -wv(k))});
  }
  return worst;
}

NonNegativeRidgeFit nonneg_ridge(const Matrix<double>& r, std::span<const double> y, double alpha) {
  if (!(alpha > 0.0)) throw Error(Errc::InvalidAlpha, "non-negative ridge alpha must be > 0");
  if (r.rows() != y.size() || r.rows() == 0) throw Error(Errc::DimensionMismatch, "non-negative ridge shapes");
  const auto k = static_cast<Eigen::Index>(r.cols());
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rm(
      r.data().data(), static_cast<Eigen::Index>(r.rows()), k);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::MatrixXd g = rm.transpose() * rm;
  g.diagonal().array() += alpha;
  const Eigen::VectorXd c = rm.transpose() * yv;

  // Projected coordinate descent on 0.5 w'Gw - c'w, w >= 0.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd gw = Eigen::VectorXd::Zero(k);
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double updated = std::max(0.0, w(j) - (gw(j) - c(j)) / g(j, j));
      const double delta = updated - w(j);
      if (delta != 0.0) {
        gw += delta * g.col(j);
        w(j) = updated;
        change = std::max(change, std::abs(delta) * g(j, j));
      }
    }
    if (change <= 1e-14 * scale) break;
  }

  // Re-solve exactly on the support found by descent; keep it when it stays feasible and
  // does not worsen the optimality residual.
  std::vector<Eigen::Index> support;
  for (Eigen::Index j = 0; j < k; ++j)
    if (w(j) > 0.0) support.push_back(j);
  std::vector<double> weights(w.data(), w.data() + k);
  double residual = kkt_residual(r, y, alpha, weights);
  if (!support.empty()) {
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd gs(s, s);
    Eigen::VectorXd cs(s);
    for (Eigen::Index a = 0; a < s; ++a) {
      cs(a) = c(support[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < s; ++b) gs(a, b) = g(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]);
    }
    const Eigen::VectorXd ws = gs.llt().solve(cs);
    if (ws.allFinite() && (ws.array() > 0.0).all()) {
      std::vector<double> polished(static_cast<std::size_t>(k), 0.0);
      for (Eigen::Index a = 0; a < s; ++a) polished[static_cast<std::size_t>(support[static_cast<std::size_t>(a)])] = ws(a);
      const double polished_residual = kkt_residual(r, y, alpha, polished);
      if (polished_residual <= residual) {
        weights = std::move(polished);
        residual = polished_residual;
      }
    }
  }
  NonNegativeRidgeFit fit;
  fit.all_zero = std::all_of(weights.begin(), weights.end(), [](double v) { return v == 0.0; });
  fit.weights = std::move(weights);
  fit.kkt_residual = residual;
  return fit;
}

CombineResult combine(std::span<const PredictionSeries> members, const Combiner& combiner, int era,
                      const dataset::TemporalTabularDataset& data, std::size_t scoring_target) {
  combiner.validate();
  if (members.empty()) throw Error(Errc::TooFewMembers, "combine needs at least one member");
  const std::size_t k = members.size();

  std::vector<std::vector<double>> target_ranks;
  target_ranks.reserve(k);
  for (const auto& m : members) target_ranks.push_back(member_ranks(m, era));
  const std::size_t n = target_ranks.front().size();
  for (const auto& v : target_ranks)
    if (v.size() != n) throw Error(Errc::DimensionMismatch, "members disagree on row count at era " + std::to_string(era));

  CombineResult out;
  auto equal_weighted = [&] {
    out.weights.assign(k, 1.0 / static_cast<double>(k));
    // centred rank = (p - 1 - N) / 2N with p the doubled position; summing the integers
    // keeps equal means bit-identical so that ties survive later ranking
    std::vector<std::int64_t> sums(n, 0);
    for (const auto& m : members) {
      const auto pos = stats::doubled_positions(m.find(era)->scores);
      for (std::size_t i = 0; i < n; ++i) sums[i] += pos[i];
    }
    const auto kk = static_cast<std::int64_t>(k), nn = static_cast<std::int64_t>(n);
    out.scores.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      out.scores[i] = static_cast<double>(sums[i] - kk * (nn + 1)) / static_cast<double>(2 * nn * kk);
  };
  if (combiner.kind == CombinerKind::EqualWeighted) {
    equal_weighted();
    return out;
  }

  const int last = era - 1 - combiner.embargo;
  const int first = last - combiner.window + 1;
  Matrix<double> r(0, k);
  std::vector<double> y;
  std::vector<double> row(k);
  for (int e = first; e <= last; ++e) {
    const auto* block = data.find_era(e);
    if (!block) throw Error(Errc::WindowNotCovered, "combiner window era " + std::to_string(e) + " missing from data");
    std::vector<std::vector<double>> ranks;
    for (const auto& m : members) ranks.push_back(member_ranks(m, e));
    for (std::size_t i = 0; i < block->size(); ++i) {
      for (std::size_t m = 0; m < k; ++m) row[m] = ranks[m].at(i);
      r.append_row(row);
      y.push_back(block->targets(i, scoring_target));
    }
  }
  const auto fit = nonneg_ridge(r, y, combiner.alpha);
  out.kkt_residual = fit.kkt_residual;
  if (fit.all_zero) {
    out.fell_back = true;
    equal_weighted();
    return out;
  }
  out.weights = fit.weights;
  out.scores.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < k; ++m) out.scores[i] += fit.weights[m] * target_ranks[m][i];
  return out;
}

// ---- orchestration ---------------------------------------------------------------------

DeepIlResult run_deep_il(const dataset::TemporalTabularDataset& data, const DeepIlPlan& plan, int start, int end,
                         int threads) {
  plan.validate();
  if (start > end) throw Error(Errc::InvalidArgument, "deep IL start after end");
  if (plan.scoring_target >= data.target_count()) throw Error(Errc::OutOfRange, "scoring target index");

  DeepIlResult result;
  std::vector<PredictionSeries> prior;
  int prior_first_valid = 0;
  for (std::size_t li = 0; li < plan.layers.size(); ++li) {
    const auto& spec = plan.layers[li];
    const int layer = static_cast<int>(li) + 1;
    int first_retrain = start;
    if (li > 0) {
      int lookback = spec.lookback;
      for (const auto& r : spec.recipes) lookback = std::max(lookback, r.lookback);
      first_retrain = std::max(start, prior_first_valid + spec.embargo + lookback - 1);
    }
    if (first_retrain >= end)
      throw Error(Errc::InsufficientHistory, "layer " + std::to_string(layer) + " cannot start before era " +
                                                 std::to_string(end));
    const auto schedule = retrain_schedule(first_retrain, end, spec.retrain_period);
    DesignBuilder builder(data, spec.input, li > 0 ? &prior : nullptr);

    std::vector<TrainTask> tasks;
    for (std::size_t r = 0; r < spec.recipes.size(); ++r)
      for (std::size_t s = 0; s < schedule.size(); ++s)
        // a retrain at `end` would serve no era
        if (s == 0 || (spec.recipes[r].retrain && schedule[s] < end)) tasks.push_back({r, s});

    std::vector<TaskOutput> outputs(tasks.size());
    parallel_for(tasks.size(), threads, [&](std::size_t t) {
      const auto& task = tasks[t];
      const auto& recipe = spec.recipes[task.recipe];
      const int as_of = schedule[task.slot];
      const bool last_slot = !recipe.retrain || task.slot + 1 == schedule.size();
      const int serve_last = last_slot ? end : schedule[task.slot + 1];
      auto& out = outputs[t];
      out.trained = train_recipe(data, builder, spec, recipe, layer, as_of);
      for (const auto& block : data.eras) {
        if (block.era <= as_of || block.era > serve_last) continue;
        EraPrediction pred;
        pred.row_ids = block.row_ids;
        pred.scores = out.trained.model.predict(builder.era_matrix(block));
        out.predictions.emplace(block.era, std::move(pred));
      }
    });

    std::vector<PredictionSeries> current(spec.recipes.size());
    for (std::size_t r = 0; r < spec.recipes.size(); ++r) {
      current[r].model_id = "layer" + std::to_string(layer) + "/" + spec.recipes[r].id;
      current[r].layer = layer;
      current[r].first_valid_era = first_retrain + 1;
    }
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      auto& series = current[tasks[t].recipe];
      for (auto& [era, pred] : outputs[t].predictions) series.eras.emplace(era, std::move(pred));
      result.models.push_back(std::move(outputs[t].trained));
    }
    for (const auto& s : current) result.strategies.emplace(s.model_id, s);
    prior = std::move(current);
    prior_first_valid = first_retrain + 1;
  }

  // Combiners and hedges work on the last layer's members.
  const auto& members = prior;
  std::vector<int> eras;
  for (const auto& block : data.eras)
    if (block.era >= prior_first_valid && block.era <= end) eras.push_back(block.era);

  for (const auto& combiner : plan.combiners) {
    PredictionSeries series;
    const bool ridge = combiner.kind == CombinerKind::NonNegativeRidge;
    series.model_id = unique_name(result.strategies, ridge ? "nonneg_ridge" : "equal_weighted");
    series.layer = static_cast<int>(plan.layers.size()) + 1;
    const int first = ridge ? prior_first_valid + combiner.embargo + combiner.window : prior_first_valid;
    series.first_valid_era = first;
    for (int era : eras) {
      if (era < first) continue;
      auto c = combine(members, combiner, era, data, plan.scoring_target);
      if (c.fell_back) result.diagnostics.combiner_fallback_eras.push_back(era);
      result.diagnostics.max_kkt_residual = std::max(result.diagnostics.max_kkt_residual, c.kkt_residual);
      series.eras.emplace(era, EraPrediction{data.era(era).row_ids, std::move(c.scores)});
    }
    if (series.eras.empty())
      throw Error(Errc::WindowNotCovered, series.model_id + " has no era with a covered training window");
    result.strategies.emplace(series.model_id, std::move(series));
  }

  if (plan.hedge) {
    const auto& cfg = *plan.hedge;
    if (members.size() < 2) throw Error(Errc::TooFewMembers, "hedging needs at least 2 members in the last layer");
    const char* names[] = {"baseline", "tail_risk", "static_hedged", "dynamic_hedged"};
    std::vector<PredictionSeries> out(4);
    for (std::size_t i = 0; i < 4; ++i) {
      out[i].model_id = names[i];
      out[i].layer = static_cast<int>(plan.layers.size()) + 1;
      out[i].first_valid_era = prior_first_valid;
    }
    std::vector<metrics::EraScore> tail_history;
    for (int era : eras) {
      const auto& block = data.era(era);
      std::vector<std::vector<double>> scores;
      for (const auto& m : members) scores.push_back(m.find(era)->scores);
      const auto signals = hedging::disagreement_signals(scores);
      const auto hedged = hedging::dynamic_hedge(signals.baseline, signals.tail, tail_history, era, cfg);
      result.diagnostics.hedge_ratios[era] = hedged.decision.ratio;
      if (hedged.decision.insufficient_history) result.diagnostics.hedge_insufficient_eras.push_back(era);

      const auto target = block.target_column(plan.scoring_target);
      try {
        tail_history.push_back({era, metrics::era_score(signals.tail, target)});
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateInput) throw;
        result.diagnostics.tail_degenerate_eras.push_back(era);
      }
      out[0].eras.emplace(era, EraPrediction{block.row_ids, signals.baseline});
      out[1].eras.emplace(era, EraPrediction{block.row_ids, signals.tail});
      out[2].eras.emplace(era, EraPrediction{block.row_ids,
                                             stats::centred_rank(hedging::static_hedge(signals.baseline, signals.tail, cfg))});
      out[3].eras.emplace(era, EraPrediction{block.row_ids, stats::centred_rank(hedged.scores)});
    }
    for (auto& s : out) result.strategies.emplace(s.model_id, std::move(s));
  }
  return result;
}

}  // namespace dil::deep_il
