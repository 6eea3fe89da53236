#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dil/app.hpp"
#include "dil/rng.hpp"
#include "dil/stats.hpp"

namespace dil::app {

namespace fs = std::filesystem;

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::InvalidArgument, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::InvalidArgument, "failed writing " + path.string());
}

fs::path require_out(const Options& o, const Json& config) {
  if (o.out) return *o.out;
  if (config.contains("out") && config.at("out").is_string()) return config.at("out").get<std::string>();
  throw Error(Errc::InvalidConfig, "an output directory is required (--out)");
}

Json load_config(const Options& o) { return o.config ? read_json(*o.config) : Json::object(); }

std::uint64_t global_seed(const Options& o, const Json& config) {
  if (o.seed) return *o.seed;
  return config.value("seed", std::uint64_t{0});
}

int thread_count(const Options& o, const Json& config) {
  const int t = o.threads ? *o.threads : config.value("threads", 1);
  if (t < 1) throw Error(Errc::InvalidConfig, "threads must be >= 1");
  return t;
}

std::string file_stem(const std::string& strategy) {
  std::string s = strategy;
  for (std::size_t p; (p = s.find('/')) != std::string::npos;) s.replace(p, 1, "__");
  return s;
}

std::string data_digest(const Json& data) {
  if (!data.contains("path")) return {};
  std::ifstream in(data.at("path").get<std::string>(), std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_hash(Json(ss.str()));
}

EraRange range_from(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("first") || !j.contains("last"))
    throw Error(Errc::InvalidConfig, where + " needs first and last");
  EraRange r{j.at("first").get<int>(), j.at("last").get<int>()};
  if (r.first > r.last) throw Error(Errc::InvalidConfig, where + " is reversed");
  return r;
}

Json range_json(EraRange r) { return Json{{"first", r.first}, {"last", r.last}}; }

void check_within(const dataset::TemporalTabularDataset& data, EraRange r, const std::string& where) {
  if (data.eras.empty() || r.first < data.eras.front().era || r.last > data.eras.back().era)
    throw Error(Errc::InvalidConfig, where + " lies outside the dataset eras");
}

struct SummaryAccumulator {
  std::vector<double> values;
  void add(const std::optional<double>& v) {
    if (v) values.push_back(*v);
  }
  std::string mean() const { return values.empty() ? std::string() : format_double(stats::mean(values)); }
  std::string std() const { return values.empty() ? std::string() : format_double(stats::population_std(values)); }
};

}  // namespace

int exit_code(const std::exception& e) noexcept {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->code()) {
      case Errc::InvalidConfig:
      case Errc::InvalidArgument:
      case Errc::InvalidAlpha:
      case Errc::UnknownGroup:
        return kConfigError;
      case Errc::BudgetExceeded:
        return kBudgetExceeded;
      default:
        return kDataError;
    }
  }
  if (dynamic_cast<const Json::exception*>(&e)) return kConfigError;
  return kDataError;
}

int run(const std::string& command, const Options& options, std::ostream& out, std::ostream& err) {
  try {
    if (command == "gen")
      cmd_gen(options, out);
    else if (command == "backtest")
      cmd_backtest(options, out);
    else if (command == "sweep")
      cmd_sweep(options, out);
    else if (command == "score")
      cmd_score(options, out);
    else if (command == "inspect")
      cmd_inspect(options, out);
    else
      throw Error(Errc::InvalidConfig, "unknown command '" + command + "'");
    return kOk;
  } catch (const std::exception& e) {
    err << "dil " << command << ": " << e.what() << '\n';
    return exit_code(e);
  }
}

// ---- reporting -------------------------------------------------------------------------

ScoredSeries score_strategy(const PredictionSeries& series, const dataset::TemporalTabularDataset& data,
                            std::size_t target_index, int first, int last) {
  ScoredSeries out;
  for (const auto& [era, pred] : series.eras) {
    if (era < first || era > last || !data.find_era(era)) continue;
    try {
      const auto s = score_series(series, data, target_index, era, era);
      out.scores.insert(out.scores.end(), s.begin(), s.end());
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateInput) throw;
      out.skipped_eras.push_back(era);
    }
  }
  return out;
}

std::string summary_csv(const std::vector<std::pair<std::string, std::vector<metrics::EraScore>>>& scored,
                        const std::vector<NamedRange>& ranges) {
  std::ostringstream os;
  os << "strategy,range,first_era,last_era,eras,mean_corr,std_corr,sharpe,calmar,max_drawdown\n";
  for (const auto& [name, scores] : scored) {
    if (scores.empty()) continue;
    std::vector<NamedRange> all{{"all", scores.front().era, scores.back().era}};
    all.insert(all.end(), ranges.begin(), ranges.end());
    for (const auto& r : all) {
      std::vector<metrics::EraScore> subset;
      for (const auto& s : scores)
        if (s.era >= r.first && s.era <= r.last) subset.push_back(s);
      if (subset.size() < 2) continue;
      const auto rep = metrics::report(subset);
      os << name << ',' << r.name << ',' << r.first << ',' << r.last << ',' << subset.size() << ','
         << format_double(rep.mean_corr) << ',' << format_double(rep.std_corr) << ',' << opt(rep.sharpe) << ','
         << opt(rep.calmar) << ',' << format_double(rep.max_drawdown) << '\n';
    }
  }
  return os.str();
}

// ---- commands --------------------------------------------------------------------------

void cmd_gen(const Options& o, std::ostream& out) {
  Json config = load_config(o);
  if (config.contains("synthetic")) config = config.at("synthetic");
  config.erase("out");
  if (o.seed) config["seed"] = *o.seed;
  if (o.eras) {
    try {
      std::size_t used = 0;
      config["eras"] = std::stoi(*o.eras, &used);
      if (used != o.eras->size()) throw std::invalid_argument("eras");
    } catch (const std::exception&) {
      throw Error(Errc::InvalidConfig, "gen --eras takes an era count");
    }
  }
  if (o.features) config["features"] = *o.features;
  const auto dir = require_out(o, load_config(o));
  const Json resolved = resolve_synth(config, 0);
  const auto data = dataset::generate_synthetic_stream(synth_from_json(resolved));
  fs::create_directories(dir);
  dataset::save_dataset(data, dir / "data.csv", dir / "groups.txt");
  Json manifest{{"synthetic", resolved}, {"config_hash", config_hash(resolved)}, {"version", kVersion}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << data.eras.size() << " eras x " << data.feature_count() << " features to " << (dir / "data.csv").string()
      << '\n';
}

void cmd_backtest(const Options& o, std::ostream& out) {
  const Json config = load_config(o);
  for (const auto& item : config.items()) {
    static const char* allowed[] = {"data",   "seed",   "threads",     "scoring_target", "backtest",      "validation",
                                    "test",   "regimes", "deep_il",    "factor_timing",  "save_models",   "out",
                                    "config_hash", "version", "data_hash"};
    if (std::none_of(std::begin(allowed), std::end(allowed), [&](const char* k) { return item.key() == k; }))
      throw Error(Errc::InvalidConfig, "unknown key '" + item.key() + "'");
  }
  const auto seed = global_seed(o, config);
  const int threads = thread_count(o, config);
  const auto dir = require_out(o, config);

  Json resolved;
  resolved["seed"] = seed;
  Json data_config = config.value("data", Json(nullptr));
  if (o.data) data_config = Json{{"path", o.data->string()}, {"groups", o.groups ? Json(o.groups->string()) : Json()}};
  resolved["data"] = resolve_data(data_config, seed);
  const auto data = load_data(resolved["data"]);
  const Json target_json = o.target ? Json(*o.target) : config.value("scoring_target", Json(nullptr));
  resolved["scoring_target"] =
      target_json.is_null() ? data.target_names.front() : data.target_names.at(data.target_index(target_json.get<std::string>()));
  const auto scoring_target = data.target_index(resolved["scoring_target"].get<std::string>());

  std::vector<NamedRange> ranges;
  for (const char* key : {"validation", "test"}) {
    resolved[key] = nullptr;
    if (!config.contains(key) || config.at(key).is_null()) continue;
    const auto r = range_from(config.at(key), key);
    check_within(data, r, key);
    resolved[key] = range_json(r);
    ranges.push_back({key, r.first, r.last});
  }
  if (ranges.size() == 2 && !(ranges[0].last < ranges[1].first || ranges[1].last < ranges[0].first))
    throw Error(Errc::InvalidConfig, "validation and test ranges overlap");
  resolved["regimes"] = Json::array();
  for (const auto& r : config.value("regimes", Json::array())) {
    const auto name = r.value("name", std::string());
    if (name.empty()) throw Error(Errc::InvalidConfig, "regimes need a name");
    const auto range = range_from(r, "regime " + name);
    check_within(data, range, "regime " + name);
    resolved["regimes"].push_back(Json{{"name", name}, {"first", range.first}, {"last", range.last}});
    ranges.push_back({"regime:" + name, range.first, range.last});
  }

  EraRange span;
  if (o.eras) {
    span = parse_era_range(*o.eras);
  } else if (config.contains("backtest")) {
    span = range_from(config.at("backtest"), "backtest");
  } else if (!ranges.empty()) {
    span = {ranges.front().first - 1, ranges.front().last};
    for (const auto& r : ranges) span = {std::min(span.first, r.first - 1), std::max(span.last, r.last)};
  } else {
    throw Error(Errc::InvalidConfig, "no backtest era range (backtest.first/last or --eras)");
  }
  check_within(data, span, "backtest range");
  resolved["backtest"] = range_json(span);
  resolved["save_models"] = config.value("save_models", true);

  resolved["deep_il"] = nullptr;
  if (config.contains("deep_il") && !config.at("deep_il").is_null())
    resolved["deep_il"] = resolve_plan(config.at("deep_il"), data, derive_seed(seed, stable_hash("deep_il")));
  resolved["factor_timing"] = resolve_factor_timing(config.value("factor_timing", Json::array()), data, seed);
  if (resolved["deep_il"].is_null() && resolved["factor_timing"].empty())
    throw Error(Errc::InvalidConfig, "nothing to run: give deep_il and/or factor_timing");

  std::map<std::string, PredictionSeries> strategies;
  Json diagnostics = Json::object();
  std::vector<deep_il::TrainedModel> models;
  if (!resolved["deep_il"].is_null()) {
    auto plan = plan_from_json(resolved["deep_il"], data);
    plan.scoring_target = scoring_target;
    auto result = deep_il::run_deep_il(data, plan, span.first, span.last, threads);
    strategies = std::move(result.strategies);
    models = std::move(result.models);
    const auto& d = result.diagnostics;
    Json ratios = Json::object();
    for (const auto& [era, h] : d.hedge_ratios) ratios[std::to_string(era)] = h;
    diagnostics["deep_il"] = Json{{"combiner_fallback_eras", d.combiner_fallback_eras},
                                  {"hedge_insufficient_eras", d.hedge_insufficient_eras},
                                  {"tail_degenerate_eras", d.tail_degenerate_eras},
                                  {"hedge_ratios", ratios},
                                  {"max_kkt_residual", d.max_kkt_residual}};
  }
  for (const auto& ft : factor_timing_from_json(resolved["factor_timing"], data)) {
    auto series = factor_timing::run_factor_timing_backtest(data, ft.config, span.first + 1, span.last);
    series.model_id = "factor_timing/" + ft.name;
    strategies.emplace(series.model_id, std::move(series));
  }

  fs::create_directories(dir / "predictions");
  std::vector<std::pair<std::string, std::vector<metrics::EraScore>>> scored;
  std::ostringstream scores_csv;
  scores_csv << "strategy,era,rho\n";
  Json skipped = Json::object();
  for (const auto& [name, series] : strategies) {
    write_predictions_csv(dir / "predictions" / (file_stem(name) + ".csv"), series);
    auto s = score_strategy(series, data, scoring_target, span.first + 1, span.last);
    for (const auto& e : s.scores) scores_csv << name << ',' << e.era << ',' << format_double(e.rho) << '\n';
    if (!s.skipped_eras.empty()) skipped[name] = s.skipped_eras;
    scored.emplace_back(name, std::move(s.scores));
  }
  diagnostics["unscored_eras"] = skipped;
  write_text(dir / "scores.csv", scores_csv.str());
  const auto summary = summary_csv(scored, ranges);
  write_text(dir / "summary.csv", summary);
  write_text(dir / "diagnostics.json", diagnostics.dump(2) + "\n");

  if (resolved["save_models"].get<bool>() && !models.empty()) {
    fs::create_directories(dir / "models");
    for (const auto& m : models) {
      std::string name = "layer" + std::to_string(m.layer) + "_" + m.recipe_id + "_era" + std::to_string(m.as_of_era);
      gbdt::save_model(m.model, dir / "models" / (name + ".model"));
    }
  }

  Json manifest = resolved;
  manifest["config_hash"] = config_hash(resolved);
  manifest["version"] = kVersion;
  const auto digest = data_digest(resolved["data"]);
  if (!digest.empty()) manifest["data_hash"] = digest;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << summary;
}

void cmd_sweep(const Options& o, std::ostream& out) {
  const Json config = load_config(o);
  for (const auto& item : config.items()) {
    static const char* allowed[] = {"data", "seed",     "threads",  "scoring_target", "train",   "eval",
                                    "base", "axes",     "lr_ladder", "seeds",         "max_runs", "snapshots",
                                    "out",  "config_hash", "version"};
    if (std::none_of(std::begin(allowed), std::end(allowed), [&](const char* k) { return item.key() == k; }))
      throw Error(Errc::InvalidConfig, "unknown key '" + item.key() + "'");
  }
  const auto seed = global_seed(o, config);
  const int threads = thread_count(o, config);
  const auto dir = require_out(o, config);

  Json resolved;
  resolved["seed"] = seed;
  Json data_config = config.value("data", Json(nullptr));
  if (o.data) data_config = Json{{"path", o.data->string()}, {"groups", o.groups ? Json(o.groups->string()) : Json()}};
  resolved["data"] = resolve_data(data_config, seed);
  const auto data = load_data(resolved["data"]);
  const Json target_json = o.target ? Json(*o.target) : config.value("scoring_target", Json(nullptr));
  resolved["scoring_target"] =
      target_json.is_null() ? data.target_names.front() : data.target_names.at(data.target_index(target_json.get<std::string>()));
  const auto target = data.target_index(resolved["scoring_target"].get<std::string>());

  if (!config.contains("train")) throw Error(Errc::InvalidConfig, "sweep needs a train era range");
  const auto train = range_from(config.at("train"), "train");
  EraRange eval;
  if (o.eras)
    eval = parse_era_range(*o.eras);
  else if (config.contains("eval"))
    eval = range_from(config.at("eval"), "eval");
  else
    throw Error(Errc::InvalidConfig, "sweep needs an eval era range");
  check_within(data, train, "train");
  check_within(data, eval, "eval");
  if (eval.first <= train.last) throw Error(Errc::InvalidConfig, "eval range must follow the train range");
  resolved["train"] = range_json(train);
  resolved["eval"] = range_json(eval);

  const auto base = hyperparams_from_json(config.value("base", Json::object()));
  resolved["base"] = hyperparams_to_json(base);
  resolved["base"].erase("seed");

  static const char* axis_names[] = {"boosting_rounds",  "learning_rate",     "max_depth",
                                     "min_samples_leaf", "row_subsample",     "feature_subsample"};
  const Json axes = config.value("axes", Json::object());
  if (!axes.is_object()) throw Error(Errc::InvalidConfig, "axes must map hyperparameter names to value lists");
  std::vector<std::pair<std::string, std::vector<double>>> grid;
  for (const auto& [name, values] : axes.items()) {
    if (std::none_of(std::begin(axis_names), std::end(axis_names), [&](const char* k) { return name == k; }))
      throw Error(Errc::InvalidConfig, "unknown sweep axis '" + name + "'");
    if (!values.is_array() || values.empty()) throw Error(Errc::InvalidConfig, "axis " + name + " needs values");
    grid.emplace_back(name, values.get<std::vector<double>>());
  }
  resolved["axes"] = axes;
  resolved["lr_ladder"] = nullptr;
  int ladder_rounds = 0;
  if (config.contains("lr_ladder") && !config.at("lr_ladder").is_null()) {
    ladder_rounds = config.at("lr_ladder").value("boosting_rounds", base.boosting_rounds);
    if (ladder_rounds < 1) throw Error(Errc::InvalidConfig, "lr_ladder.boosting_rounds must be >= 1");
    if (axes.contains("learning_rate") || axes.contains("boosting_rounds"))
      throw Error(Errc::InvalidConfig, "lr_ladder fixes boosting_rounds and learning_rate; drop those axes");
    const double l = gbdt::ansatz_learning_rate(ladder_rounds);
    grid.emplace_back("learning_rate", std::vector<double>{4 * l, 2 * l, l, l / 2, l / 4});
    resolved["lr_ladder"] = Json{{"boosting_rounds", ladder_rounds}};
  }
  const int seeds = config.value("seeds", 1);
  const int max_runs = config.value("max_runs", 1000);
  const int snapshots = config.value("snapshots", 10);
  if (seeds < 1 || max_runs < 1 || snapshots < 1) throw Error(Errc::InvalidConfig, "seeds, max_runs, snapshots must be >= 1");
  resolved["seeds"] = seeds;
  resolved["max_runs"] = max_runs;
  resolved["snapshots"] = snapshots;

  std::size_t cells = 1;
  for (const auto& [name, values] : grid) cells *= values.size();
  const std::size_t runs = cells * static_cast<std::size_t>(seeds);
  if (runs > static_cast<std::size_t>(max_runs))
    throw Error(Errc::BudgetExceeded, std::to_string(runs) + " runs requested, cap is " + std::to_string(max_runs));

  std::vector<gbdt::Hyperparams> cell_hp(cells, base);
  std::vector<std::vector<double>> cell_values(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rest = c;
    auto& hp = cell_hp[c];
    if (ladder_rounds > 0) hp.boosting_rounds = ladder_rounds;
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
      const double v = it->second[rest % it->second.size()];
      rest /= it->second.size();
      const auto& n = it->first;
      if (n == "boosting_rounds") hp.boosting_rounds = static_cast<int>(std::lround(v));
      if (n == "learning_rate") hp.learning_rate = v;
      if (n == "max_depth") hp.max_depth = static_cast<int>(std::lround(v));
      if (n == "min_samples_leaf") hp.min_samples_leaf = static_cast<int>(std::lround(v));
      if (n == "row_subsample") hp.row_subsample = v;
      if (n == "feature_subsample") hp.feature_subsample_per_tree = v;
      cell_values[c].insert(cell_values[c].begin(), v);
    }
    hp.validate();
  }

  Matrix<std::int8_t> x(0, data.feature_count());
  std::vector<double> y;
  for (const auto& block : data.eras) {
    if (block.era < train.first || block.era > train.last) continue;
    for (std::size_t i = 0; i < block.size(); ++i) {
      x.append_row(block.features.row(i));
      y.push_back(block.targets(i, target));
    }
  }
  std::vector<const dataset::EraBlock*> eval_blocks;
  for (const auto& block : data.eras)
    if (block.era >= eval.first && block.era <= eval.last) eval_blocks.push_back(&block);

  struct RunResult {
    metrics::BacktestReport full;
    std::vector<std::pair<std::size_t, metrics::BacktestReport>> curve;
  };
  auto evaluate = [&](const gbdt::Model& m) {
    std::vector<metrics::EraScore> scores;
    for (const auto* b : eval_blocks) {
      try {
        scores.push_back({b->era, metrics::era_score(m.predict(b->features), b->target_column(target))});
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateInput) throw;
      }
    }
    if (scores.size() < 2) {
      metrics::BacktestReport empty;
      empty.scores = scores;
      return empty;
    }
    return metrics::report(scores);
  };
  std::vector<RunResult> results(runs);
  deep_il::parallel_for(runs, threads, [&](std::size_t r) {
    const std::size_t cell = r / static_cast<std::size_t>(seeds);
    const std::size_t s = r % static_cast<std::size_t>(seeds);
    auto hp = cell_hp[cell];
    hp.seed = derive_seed(seed, stable_hash("sweep/" + std::to_string(s)));
    const auto model = gbdt::fit(x, y, hp);
    auto& res = results[r];
    res.full = evaluate(model);
    for (int k = 1; k <= snapshots; ++k) {
      const auto want = static_cast<std::size_t>(std::max(
          1L, std::lround(static_cast<double>(hp.boosting_rounds) * k / static_cast<double>(snapshots))));
      const auto trees = std::min(want, model.trees().size());
      res.curve.emplace_back(want, evaluate(gbdt::snapshot(model, trees)));
    }
  });

  fs::create_directories(dir);
  std::ostringstream table, curves;
  table << "cell";
  for (const auto& [name, values] : grid) table << ',' << name;
  table << ",runs,mean_corr_mean,mean_corr_std,sharpe_mean,sharpe_std,calmar_mean,calmar_std,max_drawdown_mean,"
           "max_drawdown_std\n";
  curves << "cell,fraction,trees,mean_corr,sharpe,calmar,max_drawdown\n";
  for (std::size_t c = 0; c < cells; ++c) {
    SummaryAccumulator mean, sharpe, calmar, mdd;
    for (int s = 0; s < seeds; ++s) {
      const auto& rep = results[c * static_cast<std::size_t>(seeds) + static_cast<std::size_t>(s)].full;
      if (rep.scores.size() < 2) continue;
      mean.add(rep.mean_corr);
      sharpe.add(rep.sharpe);
      calmar.add(rep.calmar);
      mdd.add(rep.max_drawdown);
    }
    table << c;
    for (double v : cell_values[c]) table << ',' << format_double(v);
    table << ',' << seeds << ',' << mean.mean() << ',' << mean.std() << ',' << sharpe.mean() << ',' << sharpe.std()
          << ',' << calmar.mean() << ',' << calmar.std() << ',' << mdd.mean() << ',' << mdd.std() << '\n';
    for (int k = 0; k < snapshots; ++k) {
      SummaryAccumulator cm, cs, cc, cd;
      std::size_t trees = 0;
      for (int s = 0; s < seeds; ++s) {
        const auto& point = results[c * static_cast<std::size_t>(seeds) + static_cast<std::size_t>(s)].curve[k];
        trees = point.first;
        if (point.second.scores.size() < 2) continue;
        cm.add(point.second.mean_corr);
        cs.add(point.second.sharpe);
        cc.add(point.second.calmar);
        cd.add(point.second.max_drawdown);
      }
      curves << c << ',' << format_double(static_cast<double>(k + 1) / snapshots) << ',' << trees << ',' << cm.mean()
             << ',' << cs.mean() << ',' << cc.mean() << ',' << cd.mean() << '\n';
    }
  }
  write_text(dir / "sweep.csv", table.str());
  write_text(dir / "curves.csv", curves.str());
  Json manifest = resolved;
  manifest["config_hash"] = config_hash(resolved);
  manifest["version"] = kVersion;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << table.str();
}

void cmd_score(const Options& o, std::ostream& out) {
  const Json config = load_config(o);
  if (!o.predictions) throw Error(Errc::InvalidConfig, "score needs --predictions");
  Json data_config = config.value("data", Json(nullptr));
  if (o.data) data_config = Json{{"path", o.data->string()}, {"groups", o.groups ? Json(o.groups->string()) : Json()}};
  if (data_config.is_null()) throw Error(Errc::InvalidConfig, "score needs --data or a config with a data section");
  const auto data = load_data(resolve_data(data_config, global_seed(o, config)));
  const std::string target_name =
      o.target ? *o.target : config.value("scoring_target", data.target_names.front());
  const auto target = data.target_index(target_name);
  const auto series = read_predictions_csv(*o.predictions, o.predictions->stem().string());
  EraRange range{data.eras.front().era, data.eras.back().era};
  if (o.eras) range = parse_era_range(*o.eras);
  auto s = score_strategy(series, data, target, range.first, range.last);
  if (s.scores.size() < 2) throw Error(Errc::TooFewEras, "fewer than 2 scorable eras in the predictions");
  const auto summary = summary_csv({{series.model_id, s.scores}}, {});
  if (o.out) {
    fs::create_directories(*o.out);
    metrics::write_scores_csv(*o.out / "scores.csv", s.scores);
    write_text(*o.out / "summary.csv", summary);
  }
  out << summary;
  if (!s.skipped_eras.empty()) out << "# eras without prediction spread: " << s.skipped_eras.size() << '\n';
}

void cmd_inspect(const Options& o, std::ostream& out) {
  if (!o.models) throw Error(Errc::InvalidConfig, "inspect needs --models <dir>");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(*o.models))
    if (entry.is_regular_file() && entry.path().extension() == ".model") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(Errc::MalformedFile, "no .model files in " + o.models->string());
  std::vector<gbdt::Model> models;
  for (const auto& f : files) models.push_back(gbdt::load_model(f));

  std::ostringstream table;
  table << "model,features,trained_features,trees,base_prediction,learning_rate,max_depth,top_features\n";
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    const auto& imp = m.feature_importance();
    std::vector<std::size_t> order(imp.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return imp[a] > imp[b]; });
    std::string top;
    for (std::size_t j = 0; j < std::min<std::size_t>(5, order.size()) && imp[order[j]] > 0; ++j)
      top += (top.empty() ? "" : ";") + std::to_string(order[j]) + ":" + std::to_string(imp[order[j]]);
    table << files[i].stem().string() << ',' << m.feature_count() << ',' << m.trained_features().size() << ','
          << m.trees().size() << ',' << format_double(m.base_prediction()) << ','
          << format_double(m.hyperparams().learning_rate) << ',' << m.hyperparams().max_depth << ',' << top << '\n';
  }
  std::ostringstream sim;
  sim << "model";
  for (const auto& f : files) sim << ',' << f.stem().string();
  sim << '\n';
  for (std::size_t i = 0; i < models.size(); ++i) {
    sim << files[i].stem().string();
    for (std::size_t j = 0; j < models.size(); ++j) {
      sim << ',';
      try {
        const auto s = gbdt::structural_similarity(models[i], models[j]);
        if (!s.degenerate) sim << format_double(s.value);
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateImportance && e.code() != Errc::FeatureMismatch) throw;
      }
    }
    sim << '\n';
  }
  if (o.out) {
    fs::create_directories(*o.out);
    write_text(*o.out / "models.csv", table.str());
    write_text(*o.out / "similarity.csv", sim.str());
  }
  out << table.str() << '\n' << sim.str();
}

}  // namespace dil::app
