#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "dil/app.hpp"
#include "dil/rng.hpp"

namespace dil::app {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, where + " must be a JSON object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw Error(Errc::InvalidConfig, where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
T get(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw Error(Errc::InvalidConfig, where + "." + key + ": " + e.what());
  }
}

std::string target_name(const Json& j, const char* key, const dataset::TemporalTabularDataset& data,
                        const std::string& where) {
  if (data.target_names.empty()) throw Error(Errc::MalformedFile, "dataset has no targets");
  if (!j.contains(key) || j.at(key).is_null()) return data.target_names.front();
  const auto& v = j.at(key);
  if (v.is_number_integer()) {
    const auto k = v.get<long long>();
    if (k < 0 || static_cast<std::size_t>(k) >= data.target_count())
      throw Error(Errc::InvalidConfig, where + "." + key + ": target index out of range");
    return data.target_names[static_cast<std::size_t>(k)];
  }
  if (!v.is_string()) throw Error(Errc::InvalidConfig, where + "." + key + " must be a target name");
  const auto name = v.get<std::string>();
  try {
    (void)data.target_index(name);
  } catch (const Error&) {
    throw Error(Errc::InvalidConfig, where + ": unknown target '" + name + "'");
  }
  return name;
}

dataset::SynthConfig parse_synth(const Json& j, std::uint64_t default_seed) {
  const std::string where = "synthetic";
  check_keys(j,
             {"eras", "rows_min", "rows_max", "features", "groups", "targets", "informative_per_regime",
              "regime_switch_eras", "regime_mode", "noise_sigma", "target_proportions", "seed"},
             where);
  dataset::SynthConfig c;
  c.eras = get(j, "eras", c.eras, where);
  c.rows_min = get(j, "rows_min", c.rows_min, where);
  c.rows_max = get(j, "rows_max", c.rows_max, where);
  c.features = get(j, "features", c.features, where);
  c.groups = get(j, "groups", c.groups, where);
  c.targets = get(j, "targets", c.targets, where);
  c.informative_per_regime = get(j, "informative_per_regime", c.informative_per_regime, where);
  c.regime_switch_eras = get(j, "regime_switch_eras", c.regime_switch_eras, where);
  const auto mode = get<std::string>(j, "regime_mode", "resample", where);
  if (mode == "resample")
    c.regime_mode = dataset::RegimeMode::Resample;
  else if (mode == "flip")
    c.regime_mode = dataset::RegimeMode::Flip;
  else
    throw Error(Errc::InvalidConfig, where + ".regime_mode must be 'resample' or 'flip'");
  c.noise_sigma = get(j, "noise_sigma", c.noise_sigma, where);
  c.target_proportions = get(j, "target_proportions", c.target_proportions, where);
  c.seed = get(j, "seed", default_seed, where);
  c.validate();
  return c;
}

Json synth_to_json(const dataset::SynthConfig& c) {
  return Json{{"eras", c.eras},
              {"rows_min", c.rows_min},
              {"rows_max", c.rows_max},
              {"features", c.features},
              {"groups", c.groups},
              {"targets", c.targets},
              {"informative_per_regime", c.informative_per_regime},
              {"regime_switch_eras", c.regime_switch_eras},
              {"regime_mode", c.regime_mode == dataset::RegimeMode::Flip ? "flip" : "resample"},
              {"noise_sigma", c.noise_sigma},
              {"target_proportions", c.target_proportions},
              {"seed", c.seed}};
}

const char* input_name(deep_il::LayerInput input) {
  switch (input) {
    case deep_il::LayerInput::RawFeatures: return "raw";
    case deep_il::LayerInput::PriorPredictions: return "prior";
    case deep_il::LayerInput::Both: return "both";
  }
  return "raw";
}

deep_il::LayerInput parse_input(const std::string& s) {
  if (s == "raw") return deep_il::LayerInput::RawFeatures;
  if (s == "prior") return deep_il::LayerInput::PriorPredictions;
  if (s == "both") return deep_il::LayerInput::Both;
  throw Error(Errc::InvalidConfig, "layer input must be raw, prior or both");
}

Json hedge_to_json(const hedging::HedgeConfig& h) {
  return Json{{"static_baseline_weight", h.static_baseline_weight},
              {"static_tail_weight", h.static_tail_weight},
              {"dynamic_ratio", h.dynamic_ratio},
              {"trailing_window", h.trailing_window},
              {"trailing_lag", h.trailing_lag},
              {"threshold", h.threshold}};
}

hedging::HedgeConfig hedge_from_json(const Json& j) {
  hedging::HedgeConfig h;
  if (j.is_boolean()) return h;
  const std::string where = "hedge";
  check_keys(j,
             {"static_baseline_weight", "static_tail_weight", "dynamic_ratio", "trailing_window", "trailing_lag",
              "threshold"},
             where);
  h.static_baseline_weight = get(j, "static_baseline_weight", h.static_baseline_weight, where);
  h.static_tail_weight = get(j, "static_tail_weight", h.static_tail_weight, where);
  h.dynamic_ratio = get(j, "dynamic_ratio", h.dynamic_ratio, where);
  h.trailing_window = get(j, "trailing_window", h.trailing_window, where);
  h.trailing_lag = get(j, "trailing_lag", h.trailing_lag, where);
  h.threshold = get(j, "threshold", h.threshold, where);
  h.validate();
  return h;
}

Json combiner_to_json(const deep_il::Combiner& c) {
  return Json{{"kind", c.kind == deep_il::CombinerKind::EqualWeighted ? "equal_weighted" : "nonneg_ridge"},
              {"alpha", c.alpha},
              {"window", c.window},
              {"embargo", c.embargo}};
}

deep_il::Combiner combiner_from_json(const Json& j) {
  const std::string where = "combiner";
  check_keys(j, {"kind", "alpha", "window", "embargo"}, where);
  deep_il::Combiner c;
  const auto kind = get<std::string>(j, "kind", "equal_weighted", where);
  if (kind == "equal_weighted")
    c.kind = deep_il::CombinerKind::EqualWeighted;
  else if (kind == "nonneg_ridge")
    c.kind = deep_il::CombinerKind::NonNegativeRidge;
  else
    throw Error(Errc::InvalidConfig, "combiner kind must be equal_weighted or nonneg_ridge");
  c.alpha = get(j, "alpha", c.alpha, where);
  c.window = get(j, "window", c.window, where);
  c.embargo = get(j, "embargo", c.embargo, where);
  c.validate();
  return c;
}

std::vector<deep_il::ModelRecipe> strategy_recipes(const Json& s, const dataset::TemporalTabularDataset& data,
                                                   int layer_lookback, std::uint64_t seed) {
  const std::string where = "strategy";
  check_keys(s, {"kind", "boosting_rounds", "retrain_large", "schemes", "seeds_per_scheme", "fraction", "target"},
             where);
  const auto kind = get<std::string>(s, "kind", "", where);
  const int b = get(s, "boosting_rounds", 100, where);
  const auto target = data.target_index(target_name(s, "target", data, where));
  const bool retrain_large = get(s, "retrain_large", false, where);
  if (kind == "training_size") return deep_il::training_size_recipes(b, layer_lookback, seed, target);
  if (kind == "learning_rate") return deep_il::learning_rate_recipes(b, seed, target, retrain_large);
  if (kind == "targets") return deep_il::target_recipes(b, seed, data.target_count());
  if (kind == "targets_learning_rate")
    return deep_il::target_learning_rate_recipes(b, seed, data.target_count(), retrain_large);
  if (kind == "jackknife") {
    std::vector<std::string> groups;
    for (const auto& [name, cols] : data.feature_groups) groups.push_back(name);
    if (groups.empty()) throw Error(Errc::InvalidConfig, "jackknife strategy needs feature groups");
    return deep_il::jackknife_recipes(b, seed, groups, target);
  }
  if (kind == "random_features")
    return deep_il::random_feature_recipes(b, seed, get(s, "schemes", 10, where), get(s, "seeds_per_scheme", 5, where),
                                           get(s, "fraction", 0.5, where), target);
  throw Error(Errc::InvalidConfig, "unknown strategy kind '" + kind + "'");
}

}  // namespace

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open config " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
  }
}

std::string config_hash(const Json& resolved) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(stable_hash(resolved.dump())));
  return buf;
}

EraRange parse_era_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error(Errc::InvalidConfig, "era range must look like first:last");
  EraRange r;
  try {
    std::size_t used = 0;
    r.first = std::stoi(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("first");
    const auto tail = text.substr(colon + 1);
    r.last = std::stoi(tail, &used);
    if (used != tail.size()) throw std::invalid_argument("last");
  } catch (const std::exception&) {
    throw Error(Errc::InvalidConfig, "bad era range '" + text + "'");
  }
  if (r.first > r.last) throw Error(Errc::InvalidConfig, "era range '" + text + "' is reversed");
  return r;
}

Json resolve_synth(const Json& config, std::uint64_t fallback_seed) {
  return synth_to_json(parse_synth(config, derive_seed(fallback_seed, stable_hash("data"))));
}

dataset::SynthConfig synth_from_json(const Json& resolved) { return parse_synth(resolved, 0); }

Json resolve_data(const Json& config, std::uint64_t global_seed) {
  if (config.is_null()) return Json{{"synthetic", resolve_synth(Json::object(), global_seed)}};
  check_keys(config, {"path", "groups", "synthetic"}, "data");
  if (config.contains("path")) {
    if (config.contains("synthetic")) throw Error(Errc::InvalidConfig, "data: give either path or synthetic");
    Json out{{"path", get<std::string>(config, "path", "", "data")}, {"groups", nullptr}};
    if (config.contains("groups") && !config.at("groups").is_null())
      out["groups"] = get<std::string>(config, "groups", "", "data");
    return out;
  }
  return Json{{"synthetic", resolve_synth(config.value("synthetic", Json::object()), global_seed)}};
}

dataset::TemporalTabularDataset load_data(const Json& resolved) {
  if (resolved.contains("path")) {
    std::optional<std::filesystem::path> groups;
    if (!resolved.at("groups").is_null()) groups = resolved.at("groups").get<std::string>();
    return dataset::load_dataset(resolved.at("path").get<std::string>(), groups);
  }
  return dataset::generate_synthetic_stream(synth_from_json(resolved.at("synthetic")));
}

gbdt::Hyperparams hyperparams_from_json(const Json& j, const gbdt::Hyperparams& defaults) {
  const std::string where = "hyperparams";
  gbdt::Hyperparams hp = defaults;
  hp.boosting_rounds = get(j, "boosting_rounds", hp.boosting_rounds, where);
  hp.learning_rate = get(j, "learning_rate", hp.learning_rate, where);
  hp.max_depth = get(j, "max_depth", hp.max_depth, where);
  hp.min_samples_leaf = get(j, "min_samples_leaf", hp.min_samples_leaf, where);
  hp.row_subsample = get(j, "row_subsample", hp.row_subsample, where);
  hp.feature_subsample_per_tree = get(j, "feature_subsample", hp.feature_subsample_per_tree, where);
  hp.seed = get(j, "seed", hp.seed, where);
  hp.validate();
  return hp;
}

Json hyperparams_to_json(const gbdt::Hyperparams& hp) {
  return Json{{"boosting_rounds", hp.boosting_rounds},     {"learning_rate", hp.learning_rate},
              {"max_depth", hp.max_depth},                 {"min_samples_leaf", hp.min_samples_leaf},
              {"row_subsample", hp.row_subsample},         {"feature_subsample", hp.feature_subsample_per_tree},
              {"seed", hp.seed}};
}

Json recipe_to_json(const deep_il::ModelRecipe& r, const dataset::TemporalTabularDataset& data) {
  Json j = hyperparams_to_json(r.hyperparams);
  j["id"] = r.id;
  j["target"] = data.target_names.at(r.target_index);
  j["lookback"] = r.lookback;
  j["retrain"] = r.retrain;
  j["row_sampling"] = r.row_sampling.kind == dataset::RowSampling::DropMedian ? "drop_median" : "all";
  j["era_stride"] = r.row_sampling.era_stride;
  j["era_offset"] = r.row_sampling.era_offset;
  switch (r.feature_sample.kind) {
    case dataset::FeatureSampleKind::AllFeatures: j["features"] = Json{{"kind", "all"}}; break;
    case dataset::FeatureSampleKind::RandomFraction:
      j["features"] = Json{{"kind", "random"}, {"fraction", r.feature_sample.fraction}, {"seed", r.feature_sample.seed}};
      break;
    case dataset::FeatureSampleKind::JackknifeDrop:
      j["features"] = Json{{"kind", "jackknife"}, {"group", r.feature_sample.group}};
      break;
  }
  return j;
}

deep_il::ModelRecipe recipe_from_json(const Json& j, const dataset::TemporalTabularDataset& data) {
  const std::string where = "recipe";
  check_keys(j,
             {"id", "boosting_rounds", "learning_rate", "max_depth", "min_samples_leaf", "row_subsample",
              "feature_subsample", "seed", "target", "lookback", "retrain", "row_sampling", "era_stride", "era_offset",
              "features"},
             where);
  deep_il::ModelRecipe r;
  r.id = get<std::string>(j, "id", "", where);
  if (r.id.empty()) throw Error(Errc::InvalidConfig, "recipe needs an id");
  const int rounds = get(j, "boosting_rounds", 100, where);
  r.hyperparams = hyperparams_from_json(j, gbdt::ansatz_hyperparams(rounds));
  r.target_index = data.target_index(target_name(j, "target", data, where + " " + r.id));
  r.lookback = get(j, "lookback", 0, where);
  r.retrain = get(j, "retrain", true, where);
  const auto rows = get<std::string>(j, "row_sampling", "all", where);
  if (rows == "all")
    r.row_sampling.kind = dataset::RowSampling::All;
  else if (rows == "drop_median")
    r.row_sampling.kind = dataset::RowSampling::DropMedian;
  else
    throw Error(Errc::InvalidConfig, "row_sampling must be all or drop_median");
  r.row_sampling.era_stride = get(j, "era_stride", 1, where);
  r.row_sampling.era_offset = get(j, "era_offset", 0, where);
  r.row_sampling.validate();
  const Json features = j.value("features", Json{{"kind", "all"}});
  check_keys(features, {"kind", "fraction", "seed", "group"}, where + ".features");
  const auto kind = get<std::string>(features, "kind", "all", where);
  if (kind == "all") {
    r.feature_sample = dataset::FeatureSampleSpec::all();
  } else if (kind == "random") {
    r.feature_sample = dataset::FeatureSampleSpec::random_fraction(get(features, "fraction", 0.5, where),
                                                                   get<std::uint64_t>(features, "seed", 0, where));
  } else if (kind == "jackknife") {
    r.feature_sample = dataset::FeatureSampleSpec::jackknife(get<std::string>(features, "group", "", where));
  } else {
    throw Error(Errc::InvalidConfig, "features.kind must be all, random or jackknife");
  }
  (void)dataset::resolve_feature_sample(r.feature_sample, data);  // surfaces unknown groups early
  return r;
}

Json resolve_plan(const Json& config, const dataset::TemporalTabularDataset& data, std::uint64_t seed) {
  check_keys(config, {"layers", "combiners", "hedge"}, "deep_il");
  if (!config.contains("layers") || !config.at("layers").is_array() || config.at("layers").empty())
    throw Error(Errc::InvalidConfig, "deep_il.layers must be a non-empty list");
  Json out;
  out["layers"] = Json::array();
  int l = 0;
  for (const auto& layer : config.at("layers")) {
    ++l;
    const std::string where = "layer " + std::to_string(l);
    check_keys(layer, {"lookback", "retrain_period", "embargo", "input", "strategy", "recipes", "era_stride",
                       "row_sampling"},
               where);
    deep_il::LayerSpec spec;
    spec.lookback = get(layer, "lookback", spec.lookback, where);
    spec.retrain_period = get(layer, "retrain_period", spec.retrain_period, where);
    spec.embargo = get(layer, "embargo", spec.embargo, where);
    spec.input = parse_input(get<std::string>(layer, "input", "raw", where));
    const auto layer_seed = derive_seed(seed, stable_hash("layer" + std::to_string(l)));

    std::vector<deep_il::ModelRecipe> recipes;
    if (layer.contains("strategy")) {
      recipes = strategy_recipes(layer.at("strategy"), data, spec.lookback, layer_seed);
      const auto rows = get<std::string>(layer, "row_sampling", "all", where);
      for (auto& r : recipes) {
        if (rows == "drop_median")
          r.row_sampling.kind = dataset::RowSampling::DropMedian;
        else if (rows != "all")
          throw Error(Errc::InvalidConfig, where + ".row_sampling must be all or drop_median");
      }
      recipes = deep_il::expand_era_stride(recipes, get(layer, "era_stride", 1, where));
    }
    if (layer.contains("recipes")) {
      if (!layer.at("recipes").is_array()) throw Error(Errc::InvalidConfig, where + ".recipes must be a list");
      for (Json r : layer.at("recipes")) {
        if (r.is_object() && !r.contains("seed") && r.contains("id") && r.at("id").is_string())
          r["seed"] = derive_seed(layer_seed, stable_hash(r.at("id").get<std::string>()));
        recipes.push_back(recipe_from_json(r, data));
      }
    }
    spec.recipes = recipes;
    spec.validate();
    Json resolved{{"lookback", spec.lookback},
                  {"retrain_period", spec.retrain_period},
                  {"embargo", spec.embargo},
                  {"input", input_name(spec.input)},
                  {"recipes", Json::array()}};
    for (const auto& r : spec.recipes) resolved["recipes"].push_back(recipe_to_json(r, data));
    out["layers"].push_back(std::move(resolved));
  }
  out["combiners"] = Json::array();
  const Json combiners = config.value(
      "combiners", Json::array({Json{{"kind", "equal_weighted"}}, Json{{"kind", "nonneg_ridge"}}}));
  if (!combiners.is_array()) throw Error(Errc::InvalidConfig, "deep_il.combiners must be a list");
  for (const auto& c : combiners) out["combiners"].push_back(combiner_to_json(combiner_from_json(c)));
  out["hedge"] = nullptr;
  if (config.contains("hedge") && !config.at("hedge").is_null() && config.at("hedge") != Json(false))
    out["hedge"] = hedge_to_json(hedge_from_json(config.at("hedge")));
  return out;
}

deep_il::DeepIlPlan plan_from_json(const Json& resolved, const dataset::TemporalTabularDataset& data) {
  deep_il::DeepIlPlan plan;
  for (const auto& layer : resolved.at("layers")) {
    deep_il::LayerSpec spec;
    spec.lookback = layer.at("lookback").get<int>();
    spec.retrain_period = layer.at("retrain_period").get<int>();
    spec.embargo = layer.at("embargo").get<int>();
    spec.input = parse_input(layer.at("input").get<std::string>());
    for (const auto& r : layer.at("recipes")) spec.recipes.push_back(recipe_from_json(r, data));
    plan.layers.push_back(std::move(spec));
  }
  for (const auto& c : resolved.at("combiners")) plan.combiners.push_back(combiner_from_json(c));
  if (!resolved.at("hedge").is_null()) plan.hedge = hedge_from_json(resolved.at("hedge"));
  plan.validate();
  return plan;
}

Json resolve_factor_timing(const Json& config, const dataset::TemporalTabularDataset& data, std::uint64_t seed) {
  if (!config.is_array()) throw Error(Errc::InvalidConfig, "factor_timing must be a list of models");
  Json out = Json::array();
  std::set<std::string> names;
  for (const auto& m : config) {
    const std::string where = "factor_timing";
    check_keys(m, {"name", "forecaster", "bounds", "embargo", "warmup", "target", "ridge_grid"}, where);
    const auto name = get<std::string>(m, "name", "", where);
    if (name.empty() || !names.insert(name).second)
      throw Error(Errc::InvalidConfig, "factor timing models need unique names");
    const Json f = m.value("forecaster", Json{{"kind", "ema"}});
    check_keys(f, {"kind", "alpha", "channels", "complexity", "lookback", "seed"}, where + " " + name + ".forecaster");
    const auto kind = get<std::string>(f, "kind", "ema", where);
    const auto model_seed = get<std::uint64_t>(f, "seed", derive_seed(seed, stable_hash("factor_timing/" + name)), where);
    Json rf;
    if (kind == "ema") {
      rf = Json{{"kind", "ema"}, {"alpha", get(f, "alpha", 0.02, where)}};
    } else if (kind == "signature") {
      rf = Json{{"kind", "signature"},
                {"channels", get(f, "channels", 4, where)},
                {"complexity", get(f, "complexity", 1.0, where)},
                {"lookback", get(f, "lookback", 0, where)},
                {"seed", model_seed}};
    } else if (kind == "rft") {
      rf = Json{{"kind", "rft"}, {"complexity", get(f, "complexity", 1.0, where)}, {"seed", model_seed}};
    } else {
      throw Error(Errc::InvalidConfig, "forecaster kind must be ema, signature or rft");
    }
    Json r{{"name", name},
           {"forecaster", rf},
           {"bounds", m.value("bounds", Json(nullptr))},
           {"embargo", get(m, "embargo", 15, where)},
           {"warmup", get(m, "warmup", 10, where)},
           {"target", target_name(m, "target", data, where)},
           {"ridge_grid", get(m, "ridge_grid", std::vector<double>(factor_timing::kRidgeGrid.begin(),
                                                                   factor_timing::kRidgeGrid.end()), where)}};
    out.push_back(std::move(r));
  }
  (void)factor_timing_from_json(out, data);  // validates
  return out;
}

std::vector<NamedFactorTiming> factor_timing_from_json(const Json& resolved,
                                                       const dataset::TemporalTabularDataset& data) {
  std::vector<NamedFactorTiming> out;
  for (const auto& m : resolved) {
    NamedFactorTiming n;
    n.name = m.at("name").get<std::string>();
    auto& c = n.config;
    const auto& f = m.at("forecaster");
    const auto kind = f.at("kind").get<std::string>();
    try {
      if (kind == "ema") {
        c.forecaster = factor_timing::EmaForecaster{f.at("alpha").get<double>()};
      } else if (kind == "signature") {
        factor_timing::SignatureForecaster s;
        s.channels = f.at("channels").get<int>();
        s.complexity = f.at("complexity").get<double>();
        s.lookback = f.at("lookback").get<int>();
        s.seed = f.at("seed").get<std::uint64_t>();
        c.forecaster = s;
      } else {
        c.forecaster = factor_timing::RftForecaster{f.at("complexity").get<double>(), f.at("seed").get<std::uint64_t>()};
      }
      if (!m.at("bounds").is_null()) {
        const auto b = m.at("bounds").get<std::vector<double>>();
        if (b.size() != 2) throw Error(Errc::InvalidConfig, "bounds must be [lower, upper]");
        c.bounds = factor_timing::TruncationBounds{b[0], b[1]};
      }
      c.embargo = m.at("embargo").get<int>();
      c.warmup = m.at("warmup").get<int>();
      c.ridge_grid = m.at("ridge_grid").get<std::vector<double>>();
    } catch (const Json::exception& e) {
      throw Error(Errc::InvalidConfig, "factor timing " + n.name + ": " + e.what());
    }
    c.target_index = data.target_index(m.at("target").get<std::string>());
    c.validate();
    out.push_back(std::move(n));
  }
  return out;
}

}  // namespace dil::app
