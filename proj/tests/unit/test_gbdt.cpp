#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <map>
#include <random>
#include <sstream>

#include "dil/gbdt.hpp"

using namespace dil;
using namespace dil::gbdt;

namespace {

struct Problem {
  Matrix<std::int8_t> x;
  std::vector<double> y;
};

Problem random_problem(std::uint64_t seed, std::size_t n, std::size_t m, double noise = 0.3) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> bin(-2, 2);
  std::normal_distribution<double> eps(0.0, noise);
  Problem p{Matrix<std::int8_t>(n, m), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) p.x(i, j) = static_cast<std::int8_t>(bin(gen));
    const double a = p.x(i, 0), b = m > 1 ? p.x(i, 1) : 0.0;
    p.y[i] = 0.5 * a - 0.3 * b * b + (a > 0 && b < 0 ? 1.0 : 0.0) + eps(gen);
  }
  return p;
}

double mse(const Model& model, const Problem& p) {
  const auto pred = model.predict(p.x);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - p.y[i]) * (pred[i] - p.y[i]);
  return s / static_cast<double>(pred.size());
}

Hyperparams full_sample(int rounds, double lr, int depth) {
  Hyperparams hp;
  hp.boosting_rounds = rounds;
  hp.learning_rate = lr;
  hp.max_depth = depth;
  hp.seed = 1;
  return hp;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("Ansatz learning rate") {
  CHECK(ansatz_learning_rate(5000) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(ansatz_learning_rate(50000) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(ansatz_learning_rate(500) == doctest::Approx(0.1).epsilon(1e-15));
  const auto hp = ansatz_hyperparams(5000, 3);
  CHECK(hp.max_depth == 4);
  CHECK(hp.row_subsample == 0.75);
  CHECK(hp.feature_subsample_per_tree == 0.75);
}

TEST_CASE("hyperparameter validation") {
  auto bad = [](auto mutate) {
    Hyperparams hp;
    mutate(hp);
    return hp;
  };
  CHECK_THROWS_AS(bad([](Hyperparams& h) { h.boosting_rounds = 0; }).validate(), Error);
  CHECK_THROWS_AS(bad([](Hyperparams& h) { h.learning_rate = 0; }).validate(), Error);
  CHECK_THROWS_AS(bad([](Hyperparams& h) { h.max_depth = 0; }).validate(), Error);
  CHECK_THROWS_AS(bad([](Hyperparams& h) { h.min_samples_leaf = 0; }).validate(), Error);
  CHECK_THROWS_AS(bad([](Hyperparams& h) { h.row_subsample = 1.5; }).validate(), Error);
  CHECK_THROWS_AS(bad([](Hyperparams& h) { h.feature_subsample_per_tree = 0; }).validate(), Error);
}

TEST_CASE("constant target gives a tree-less model") {
  Problem p = random_problem(1, 40, 3);
  std::fill(p.y.begin(), p.y.end(), 0.25);
  const auto model = fit(p.x, p.y, full_sample(10, 0.1, 3));
  CHECK(model.trees().empty());
  for (double v : model.predict(p.x)) CHECK(v == 0.25);
}

TEST_CASE("stump reproduces a two-level target exactly") {
  Matrix<std::int8_t> x(6, 1);
  std::vector<double> y(6);
  for (std::size_t i = 0; i < 6; ++i) {
    x(i, 0) = i % 2 ? 2 : -2;
    y[i] = i % 2 ? 1.0 : 0.0;
  }
  const auto model = fit(x, y, full_sample(1, 1.0, 1));
  REQUIRE(model.trees().size() == 1);
  const auto pred = model.predict(x);
  for (std::size_t i = 0; i < 6; ++i) CHECK(pred[i] == y[i]);
}

TEST_CASE("root split matches brute-force enumeration") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto p = random_problem(seed, 30, 3, 1.0);
    const auto model = fit(p.x, p.y, full_sample(1, 1.0, 1));
    REQUIRE(model.trees().size() == 1);
    const auto& root = model.trees()[0].nodes[0];

    double mean = 0;
    for (double v : p.y) mean += v;
    mean /= 30.0;
    double best_sse = 0;
    int best_f = -1, best_t = 0;
    for (int f = 0; f < 3; ++f) {
      for (int t = -2; t <= 1; ++t) {
        double sl = 0, sr = 0, nl = 0, nr = 0;
        for (std::size_t i = 0; i < 30; ++i) {
          if (p.x(i, static_cast<std::size_t>(f)) <= t) {
            sl += p.y[i] - mean;
            ++nl;
          } else {
            sr += p.y[i] - mean;
            ++nr;
          }
        }
        if (nl == 0 || nr == 0) continue;
        double sse = 0;
        for (std::size_t i = 0; i < 30; ++i) {
          const double fitted = p.x(i, static_cast<std::size_t>(f)) <= t ? sl / nl : sr / nr;
          sse += (p.y[i] - mean - fitted) * (p.y[i] - mean - fitted);
        }
        if (best_f < 0 || sse < best_sse - 1e-12) {
          best_sse = sse;
          best_f = f;
          best_t = t;
        }
      }
    }
    CHECK(root.feature == best_f);
    CHECK(root.threshold == best_t);
    double fitted_sse = 0;
    const auto pred = model.predict(p.x);
    for (std::size_t i = 0; i < 30; ++i) fitted_sse += (pred[i] - p.y[i]) * (pred[i] - p.y[i]);
    CHECK(fitted_sse == doctest::Approx(best_sse).epsilon(1e-10));
  }
}

TEST_CASE("equal-gain splits prefer the lowest feature then the lowest threshold") {
  Matrix<std::int8_t> x(4, 2);
  std::vector<double> y{0, 0, 1, 1};
  const int col[4] = {-2, -1, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) x(i, 0) = x(i, 1) = static_cast<std::int8_t>(col[i]);
  const auto model = fit(x, y, full_sample(1, 1.0, 1));
  CHECK(model.trees()[0].nodes[0].feature == 0);
  CHECK(model.trees()[0].nodes[0].threshold == -1);
  // thresholds -1 and 0 separate the same rows; the lower one wins
  Matrix<std::int8_t> gap(4, 1);
  const int g[4] = {-2, -1, 1, 1};
  for (std::size_t i = 0; i < 4; ++i) gap(i, 0) = static_cast<std::int8_t>(g[i]);
  CHECK(fit(gap, y, full_sample(1, 1.0, 1)).trees()[0].nodes[0].threshold == -1);
}

TEST_CASE("full-sample training loss never increases") {
  const auto p = random_problem(4, 200, 5);
  const auto model = fit(p.x, p.y, full_sample(100, 0.1, 3));
  double previous = mse(snapshot(model, 0), p);
  for (std::size_t k = 1; k <= model.trees().size(); ++k) {
    const double current = mse(snapshot(model, k), p);
    CHECK(current <= previous);
    previous = current;
  }
}

TEST_CASE("snapshots are prefixes") {
  const auto p = random_problem(5, 150, 4);
  auto hp = ansatz_hyperparams(60, 9);
  const auto model = fit(p.x, p.y, hp);
  CHECK(bitwise_equal(snapshot(model, model.trees().size()).predict(p.x), model.predict(p.x)));
  for (double v : snapshot(model, 0).predict(p.x)) CHECK(v == model.base_prediction());
  CHECK_THROWS_AS(snapshot(model, model.trees().size() + 1), Error);
  for (std::size_t k : {1u, 7u, 30u, 59u}) {
    const auto partial = snapshot(model, k).predict(p.x);
    const auto full = model.predict(p.x);
    for (std::size_t i = 0; i < p.x.rows(); ++i) {
      double rest = 0;
      for (std::size_t t = k; t < model.trees().size(); ++t) rest += hp.learning_rate * model.trees()[t].evaluate(p.x.row(i));
      CHECK(std::abs(partial[i] + rest - full[i]) <= 1e-12);
    }
    std::size_t splits = 0;
    const auto head = snapshot(model, k);
    for (auto c : head.feature_importance()) splits += c;
    std::size_t internal = 0;
    for (std::size_t t = 0; t < k; ++t) internal += model.trees()[t].internal_count();
    CHECK(splits == internal);
  }
}

TEST_CASE("training is deterministic and respects the feature set") {
  const auto p = random_problem(6, 120, 6);
  const auto hp = ansatz_hyperparams(40, 2);
  const std::vector<std::size_t> subset{1, 3, 4};
  const auto a = fit(p.x, p.y, hp, subset);
  const auto b = fit(p.x, p.y, hp, subset);
  CHECK(a == b);
  CHECK(a.trained_features() == subset);
  CHECK(a.feature_importance()[0] == 0);
  CHECK(a.feature_importance()[2] == 0);
  CHECK(a.feature_importance()[5] == 0);
  for (const auto& tree : a.trees()) CHECK(tree.depth() <= hp.max_depth);
  auto other = hp;
  other.seed = 3;
  CHECK_FALSE(fit(p.x, p.y, other, subset) == a);
}

TEST_CASE("fit and predict errors") {
  const auto p = random_problem(7, 10, 3);
  auto hp = full_sample(5, 0.1, 2);
  hp.min_samples_leaf = 10;
  try {
    fit(p.x, p.y, hp);
    FAIL("expected InsufficientRows");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientRows);
  }
  const auto model = fit(p.x, p.y, full_sample(5, 0.1, 2));
  Matrix<std::int8_t> narrow(2, 2);
  try {
    model.predict(narrow);
    FAIL("expected FeatureMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FeatureMismatch);
  }
}

TEST_CASE("min_samples_leaf bounds leaf sizes") {
  const auto p = random_problem(8, 100, 4);
  auto hp = full_sample(5, 0.5, 4);
  hp.min_samples_leaf = 15;
  const auto model = fit(p.x, p.y, hp);
  for (const auto& tree : model.trees()) {
    std::map<std::size_t, int> leaf_rows;
    for (std::size_t i = 0; i < p.x.rows(); ++i) {
      std::size_t node = 0;
      while (!tree.nodes[node].is_leaf())
        node = static_cast<std::size_t>(p.x(i, static_cast<std::size_t>(tree.nodes[node].feature)) <= tree.nodes[node].threshold
                                            ? tree.nodes[node].left
                                            : tree.nodes[node].right);
      ++leaf_rows[node];
    }
    for (const auto& [leaf, count] : leaf_rows) CHECK(count >= 15);
  }
}

TEST_CASE("save and load reproduce predictions bitwise") {
  const auto p = random_problem(9, 120, 5);
  const auto model = fit(p.x, p.y, ansatz_hyperparams(50, 4));
  std::stringstream buffer;
  save_model(model, buffer);
  const auto back = load_model(buffer);
  CHECK(back == model);
  CHECK(bitwise_equal(back.predict(p.x), model.predict(p.x)));
  std::stringstream broken("dil-gbdt 1\nfeatures x\n");
  CHECK_THROWS_AS(load_model(broken), Error);
}

TEST_CASE("structural similarity properties") {
  const std::vector<double> a{5, 1, 3, 0, 2};
  const std::vector<double> rev{0, 5, 2, 7, 3};
  CHECK(structural_similarity(a, a).value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(structural_similarity(a, rev).value == doctest::Approx(-1.0).epsilon(1e-14));
  std::mt19937_64 gen(12);
  std::uniform_int_distribution<int> pick(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(12), y(12);
    for (auto& v : x) v = pick(gen);
    for (auto& v : y) v = pick(gen);
    x[0] = 0, x[1] = 1, y[0] = 3, y[1] = 4;  // at least two levels
    const auto s = structural_similarity(x, y);
    CHECK(s.value >= -1.0);
    CHECK(s.value <= 1.0);
    CHECK(s.value == structural_similarity(y, x).value);
  }
  const std::vector<double> flat(5, 2.0);
  const auto one = structural_similarity(a, flat);
  CHECK(one.degenerate);
  CHECK(one.value == 0.0);
  CHECK_THROWS_AS(structural_similarity(flat, flat), Error);
  const auto p = random_problem(10, 150, 6);
  const auto m = fit(p.x, p.y, ansatz_hyperparams(30, 1));
  CHECK(structural_similarity(m, m).value == doctest::Approx(1.0).epsilon(1e-14));
}
