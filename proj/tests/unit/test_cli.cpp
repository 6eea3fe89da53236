#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "dil/app.hpp"

namespace fs = std::filesystem;
using namespace dil;
using app::Json;
using app::Options;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("dil_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int run(const std::string& cmd, const Options& o, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = app::run(cmd, o, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

const std::vector<std::string>* find_row(const std::vector<std::vector<std::string>>& rows, const std::string& a,
                                         const std::string& b) {
  for (const auto& r : rows)
    if (r.size() > 1 && r[0] == a && r[1] == b) return &r;
  return nullptr;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa)
    if (slurp(a / f) != slurp(b / f)) return false;
  return true;
}

const char* kBacktest = R"({
  "data": {"synthetic": {"eras": 60, "features": 8, "rows_min": 40, "rows_max": 50,
                          "regime_switch_eras": [40], "regime_mode": "flip", "noise_sigma": 0.5}},
  "seed": 5,
  "backtest": {"first": 20, "last": 60},
  "test": {"first": 30, "last": 60},
  "regimes": [{"name": "early", "first": 30, "last": 44}, {"name": "late", "first": 45, "last": 60}],
  "deep_il": {"layers": [{"lookback": 10, "retrain_period": 10, "embargo": 2,
                          "recipes": [{"id": "solo", "boosting_rounds": 20, "learning_rate": 0.1, "max_depth": 3}]}],
              "combiners": [{"kind": "equal_weighted"}]},
  "factor_timing": [{"name": "ema", "forecaster": {"kind": "ema", "alpha": 0.1}, "embargo": 3, "warmup": 5}],
  "save_models": true
})";

}  // namespace

TEST_CASE("gen writes a loadable deterministic dataset") {
  TempDir t;
  Options o;
  o.out = t.path / "a";
  o.seed = 11;
  o.eras = "100";
  o.features = 20;
  REQUIRE(run("gen", o) == 0);
  const auto data = dataset::load_dataset(t.path / "a" / "data.csv", t.path / "a" / "groups.txt");
  data.validate();
  CHECK(data.eras.size() == 100);
  CHECK(data.feature_count() == 20);
  CHECK_FALSE(data.feature_groups.empty());
  o.out = t.path / "b";
  REQUIRE(run("gen", o) == 0);
  CHECK(same_tree(t.path / "a", t.path / "b"));
  o.out = t.path / "c";
  o.seed = 12;
  REQUIRE(run("gen", o) == 0);
  CHECK(slurp(t.path / "a" / "data.csv") != slurp(t.path / "c" / "data.csv"));
}

TEST_CASE("backtest report composes metrics over the saved predictions") {
  TempDir t;
  write(t.path / "bt.json", kBacktest);
  Options o;
  o.config = t.path / "bt.json";
  o.out = t.path / "run";
  std::string err;
  REQUIRE(run("backtest", o, &err) == 0);
  INFO(err);
  const auto manifest = app::read_json(t.path / "run" / "manifest.json");
  const auto data = app::load_data(manifest["data"]);
  const auto preds = read_predictions_csv(t.path / "run" / "predictions" / "layer1__solo.csv", "layer1/solo");
  const auto scores = score_series(preds, data, 0, 20, 60);
  const auto rep = metrics::report(scores);
  const auto summary = read_csv(t.path / "run" / "summary.csv");
  const auto* row = find_row(summary, "layer1/solo", "all");
  REQUIRE(row != nullptr);
  CHECK((*row)[4] == std::to_string(scores.size()));
  CHECK((*row)[5] == format_double(rep.mean_corr));
  CHECK((*row)[6] == format_double(rep.std_corr));
  REQUIRE(rep.sharpe.has_value());
  CHECK((*row)[7] == format_double(*rep.sharpe));
  CHECK((*row)[9] == format_double(rep.max_drawdown));
  CHECK(fs::exists(t.path / "run" / "predictions" / "factor_timing__ema.csv"));
  CHECK(fs::exists(t.path / "run" / "diagnostics.json"));
  CHECK_FALSE(fs::is_empty(t.path / "run" / "models"));

  // regimes partition the test range: era-weighted regime means give the test mean
  for (const std::string name : {"layer1/solo", "equal_weighted", "factor_timing/ema"}) {
    const auto* test = find_row(summary, name, "test");
    const auto* early = find_row(summary, name, "regime:early");
    const auto* late = find_row(summary, name, "regime:late");
    REQUIRE(test != nullptr);
    REQUIRE(early != nullptr);
    REQUIRE(late != nullptr);
    const double n1 = std::stod((*early)[4]), n2 = std::stod((*late)[4]);
    CHECK(n1 + n2 == std::stod((*test)[4]));
    const double weighted = (n1 * std::stod((*early)[5]) + n2 * std::stod((*late)[5])) / (n1 + n2);
    CHECK(std::abs(weighted - std::stod((*test)[5])) <= 1e-12);
  }
}

TEST_CASE("backtest reruns from the manifest byte for byte at any thread count") {
  TempDir t;
  write(t.path / "bt.json", kBacktest);
  Options o;
  o.config = t.path / "bt.json";
  o.out = t.path / "first";
  o.threads = 2;
  REQUIRE(run("backtest", o) == 0);
  for (int threads : {1, 8}) {
    Options again;
    again.config = t.path / "first" / "manifest.json";
    again.out = t.path / ("rerun" + std::to_string(threads));
    again.threads = threads;
    REQUIRE(run("backtest", again) == 0);
    CHECK(same_tree(t.path / "first", again.out.value()));
  }
}

TEST_CASE("sweep grid, ladder and budget") {
  TempDir t;
  Options g;
  g.out = t.path / "data";
  g.seed = 3;
  g.eras = "30";
  g.features = 6;
  REQUIRE(run("gen", g) == 0);

  write(t.path / "grid.json", R"({"data": {"path": ")" + (t.path / "data" / "data.csv").string() +
                                  R"("}, "train": {"first": 1, "last": 20}, "eval": {"first": 21, "last": 30},
      "base": {"boosting_rounds": 10, "learning_rate": 0.2},
      "axes": {"max_depth": [2, 3], "row_subsample": [0.5, 0.75, 1.0]}, "seeds": 2, "snapshots": 10})");
  Options o;
  o.config = t.path / "grid.json";
  o.out = t.path / "grid";
  REQUIRE(run("sweep", o) == 0);
  const auto table = read_csv(t.path / "grid" / "sweep.csv");
  REQUIRE(table.size() == 7);
  CHECK(table[0][1] == "max_depth");
  CHECK(table[0][2] == "row_subsample");
  for (std::size_t r = 1; r < table.size(); ++r) CHECK(table[r][3] == "2");
  const auto curves = read_csv(t.path / "grid" / "curves.csv");
  CHECK(curves.size() == 1 + 6 * 10);
  CHECK(curves[10][1] == format_double(1.0));
  CHECK(curves[10][2] == "10");

  write(t.path / "ladder.json", R"({"data": {"path": ")" + (t.path / "data" / "data.csv").string() +
                                    R"("}, "train": {"first": 1, "last": 20}, "eval": {"first": 21, "last": 30},
      "lr_ladder": {"boosting_rounds": 5000}, "max_runs": 5, "snapshots": 2, "base": {"max_depth": 1}})");
  o.config = t.path / "ladder.json";
  o.out = t.path / "ladder";
  REQUIRE(run("sweep", o) == 0);
  const auto ladder = read_csv(t.path / "ladder" / "sweep.csv");
  REQUIRE(ladder.size() == 6);
  const double rates[5] = {0.04, 0.02, 0.01, 0.005, 0.0025};
  for (std::size_t r = 0; r < 5; ++r) CHECK(std::stod(ladder[r + 1][1]) == doctest::Approx(rates[r]).epsilon(1e-12));

  write(t.path / "big.json", R"({"data": {"path": ")" + (t.path / "data" / "data.csv").string() +
                                 R"("}, "train": {"first": 1, "last": 20}, "eval": {"first": 21, "last": 30},
      "axes": {"max_depth": [1, 2, 3]}, "seeds": 2, "max_runs": 5})");
  o.config = t.path / "big.json";
  o.out = t.path / "big";
  CHECK(run("sweep", o) == 4);
}

TEST_CASE("score and inspect") {
  TempDir t;
  write(t.path / "bt.json", kBacktest);
  Options o;
  o.config = t.path / "bt.json";
  o.out = t.path / "run";
  REQUIRE(run("backtest", o) == 0);

  // export the run's dataset so score can read it from disk
  const auto manifest = app::read_json(t.path / "run" / "manifest.json");
  const auto data = app::load_data(manifest["data"]);
  dataset::save_dataset(data, t.path / "data.csv");
  Options s;
  s.data = t.path / "data.csv";
  s.predictions = t.path / "run" / "predictions" / "layer1__solo.csv";
  s.out = t.path / "scored";
  REQUIRE(run("score", s) == 0);
  const auto scores = read_csv(t.path / "scored" / "scores.csv");
  const auto series = read_csv(t.path / "run" / "scores.csv");
  std::size_t solo_rows = 0;
  for (const auto& r : series) solo_rows += r[0] == "layer1/solo";
  CHECK(scores.size() == solo_rows + 1);

  Options i;
  i.models = t.path / "run" / "models";
  i.out = t.path / "inspect";
  REQUIRE(run("inspect", i) == 0);
  const auto models = read_csv(t.path / "inspect" / "models.csv");
  const auto sim = read_csv(t.path / "inspect" / "similarity.csv");
  CHECK(models.size() == sim.size());
  for (std::size_t r = 1; r < sim.size(); ++r)
    if (!sim[r][r].empty()) CHECK(std::stod(sim[r][r]) == doctest::Approx(1.0));
}

TEST_CASE("exit codes") {
  TempDir t;
  Options o;
  o.out = t.path / "x";
  write(t.path / "broken.json", "{ not json");
  o.config = t.path / "broken.json";
  CHECK(run("backtest", o) == 2);
  write(t.path / "unknown.json", R"({"bogus": 1})");
  o.config = t.path / "unknown.json";
  CHECK(run("backtest", o) == 2);
  write(t.path / "missing.json", R"({"data": {"path": "/nonexistent/data.csv"}, "backtest": {"first": 2, "last": 5}})");
  o.config = t.path / "missing.json";
  CHECK(run("backtest", o) == 3);
  CHECK(run("nope", o) == 2);
  Options s;
  s.predictions = t.path / "p.csv";
  CHECK(run("score", s) == 2);
  CHECK_THROWS_AS(app::parse_era_range("5-9"), Error);
  CHECK(app::parse_era_range("5:9").last == 9);
}
