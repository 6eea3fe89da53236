#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dil/tsfeat.hpp"
#include "../support/oracles.hpp"

using namespace dil;
using namespace dil::tsfeat;

namespace {

Eigen::MatrixXd random_path(std::mt19937_64& gen, int rows, int cols) {
  std::normal_distribution<double> d;
  Eigen::MatrixXd p(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) p(i, j) = d(gen);
  return p;
}

std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& p) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(p.rows()));
  for (int i = 0; i < p.rows(); ++i)
    for (int j = 0; j < p.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(p(i, j));
  return out;
}

dataset::EraBlock block_from(const std::vector<std::vector<int>>& features, const std::vector<double>& target) {
  dataset::EraBlock b;
  b.era = 1;
  b.features = dataset::FeatureMatrix(target.size(), features.size());
  b.targets = dataset::TargetMatrix(target.size(), 1);
  for (std::size_t i = 0; i < target.size(); ++i) {
    b.row_ids.push_back("r" + std::to_string(i));
    for (std::size_t j = 0; j < features.size(); ++j) b.features(i, j) = static_cast<std::int8_t>(features[j][i]);
    b.targets(i, 0) = target[i];
  }
  return b;
}

}  // namespace

TEST_CASE("ema examples and errors") {
  const std::vector<double> x{0, 1, 1};
  const auto y = ema(x, 0.5);
  CHECK(y == std::vector<double>{0, 0.5, 0.75});
  const std::vector<double> c(6, 3.5);
  for (double v : ema(c, 0.3)) CHECK(v == doctest::Approx(3.5).epsilon(1e-15));
  const std::vector<double> r{0.2, -1, 4, 2};
  CHECK(ema(r, 1.0) == r);
  CHECK_THROWS_AS(ema(r, 0.0), Error);
  CHECK_THROWS_AS(ema(r, 1.5), Error);
  CHECK_THROWS_AS(ema(std::span<const double>{}, 0.5), Error);
}

TEST_CASE("ema matches the closed form") {
  std::mt19937_64 gen(3);
  for (double alpha : {0.00125, 0.02, 0.3, 1.0}) {
    const auto x = oracle::random_normals(gen, 80);
    const auto y = ema(x, alpha);
    for (std::size_t t = 0; t < x.size(); ++t) {
      double closed = std::pow(1 - alpha, static_cast<double>(t)) * x[0];
      for (std::size_t i = 1; i <= t; ++i) closed += alpha * std::pow(1 - alpha, static_cast<double>(t - i)) * x[i];
      CHECK(std::abs(closed - y[t]) <= 1e-12);
    }
  }
}

TEST_CASE("feature performance rows") {
  std::vector<double> target;
  std::vector<int> same, flat;
  const double bins[5] = {-0.5, -0.25, 0, 0.25, 0.5};
  for (int i = 0; i < 50; ++i) {
    target.push_back(bins[i % 5]);
    same.push_back(i % 5 - 2);
    flat.push_back(1);
  }
  std::vector<std::uint8_t> zero;
  const auto row = feature_performance_row(block_from({same, flat}, target), 0, &zero);
  CHECK(row[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(row[1] == 0.0);
  CHECK(zero == std::vector<std::uint8_t>{0, 1});
  CHECK_THROWS_AS(feature_performance_row(block_from({same}, std::vector<double>(50, 0.25)), 0), Error);
}

TEST_CASE("independent feature correlation stays small") {
  dataset::SynthConfig cfg;
  cfg.eras = 20;
  cfg.rows_min = cfg.rows_max = 500;
  cfg.features = 8;
  cfg.informative_per_regime = 1;
  cfg.seed = 11;
  const auto stream = dataset::generate_synthetic_stream_detailed(cfg);
  const auto perf = feature_performance(stream.data, 0);
  REQUIRE(perf.values.rows() == 20);
  for (std::size_t j = 0; j < 8; ++j) {
    if (stream.regime_weights[0][j] != 0.0) continue;
    int large = 0;
    for (int t = 0; t < 20; ++t) large += std::abs(perf.values(t, static_cast<int>(j))) >= 0.15;
    CHECK(large <= 1);
  }
  for (int t = 0; t < 20; ++t) {
    const auto row = feature_performance_row(stream.data.eras[static_cast<std::size_t>(t)], 0);
    for (std::size_t j = 0; j < 8; ++j) CHECK(row[j] == perf.values(t, static_cast<int>(j)));
  }
}

TEST_CASE("lookback slicing") {
  Eigen::MatrixXd s(5, 2);
  for (int i = 0; i < 5; ++i) s(i, 0) = i + 1, s(i, 1) = -(i + 1);
  auto a = lookback_slice(s, 3, 10);
  CHECK(a.rows() == 3);
  CHECK(a(0, 0) == 1);
  auto b = lookback_slice(s, 5, 2);
  CHECK(b.rows() == 3);
  CHECK(b(0, 0) == 3);
  CHECK(b(2, 0) == 5);
  auto c = lookback_slice(s, 4, 0);
  CHECK(c.rows() == 1);
  CHECK(c(0, 1) == -4);
  CHECK_THROWS_AS(lookback_slice(s, 6, 1), Error);
  CHECK_THROWS_AS(lookback_slice(s, 0, 1), Error);
}

TEST_CASE("signature of a straight segment") {
  Eigen::MatrixXd p(2, 3);
  p << 0, 0, 0, 1, -2, 3;
  const auto sig = signature_level2(p);
  REQUIRE(sig.size() == 12);
  const double v[3] = {1, -2, 3};
  for (int i = 0; i < 3; ++i) {
    CHECK(sig[static_cast<std::size_t>(i)] == v[i]);
    for (int j = 0; j < 3; ++j) CHECK(sig[static_cast<std::size_t>(3 + 3 * i + j)] == doctest::Approx(v[i] * v[j] / 2));
  }
  CHECK_THROWS_AS(signature_level2(Eigen::MatrixXd(1, 3)), Error);
}

TEST_CASE("signature against double summation, Chen and shuffle") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + trial % 3;
    const int l1 = 2 + static_cast<int>(gen() % 9), l2 = 2 + static_cast<int>(gen() % 9);
    const auto p = random_path(gen, l1, c);
    auto q = random_path(gen, l2, c);
    q.rowwise() += p.row(l1 - 1) - q.row(0);  // Q starts where P ends
    Eigen::MatrixXd pq(l1 + l2 - 1, c);
    pq << p, q.bottomRows(l2 - 1);
    const auto sp = signature_level2(p), sq = signature_level2(q), spq = signature_level2(pq);
    const auto ref = oracle::signature(to_rows(pq));
    const auto cc = static_cast<std::size_t>(c);
    for (std::size_t k = 0; k < spq.size(); ++k) CHECK(std::abs(spq[k] - ref[k]) <= 1e-9);
    for (std::size_t i = 0; i < cc; ++i)
      for (std::size_t j = 0; j < cc; ++j) {
        const double chen = sp[cc + i * cc + j] + sq[cc + i * cc + j] + sp[i] * sq[j];
        CHECK(std::abs(spq[cc + i * cc + j] - chen) <= 1e-9);
        CHECK(std::abs(spq[cc + i * cc + j] + spq[cc + j * cc + i] - spq[i] * spq[j]) <= 1e-9);
      }
  }
}

TEST_CASE("duplicated sample point leaves the signature unchanged") {
  std::mt19937_64 gen(8);
  const auto p = random_path(gen, 6, 4);
  Eigen::MatrixXd d(7, 4);
  d << p.topRows(3), p.row(2), p.bottomRows(3);
  const auto a = signature_level2(p), b = signature_level2(d);
  REQUIRE(a.size() == 20);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-12);
}

TEST_CASE("random signature composes channel draws") {
  std::mt19937_64 gen(9);
  const auto path = random_path(gen, 8, 10);
  SignatureSpec spec{4, 3, 42};
  const auto out = random_signature(path, spec);
  REQUIRE(out.size() == spec.width());
  CHECK(out == random_signature(path, spec));
  for (std::size_t s = 0; s < 3; ++s) {
    const auto ch = signature_channels(spec, s, 10);
    REQUIRE(ch.size() == 4);
    Eigen::MatrixXd sub(8, 4);
    for (int k = 0; k < 4; ++k) sub.col(k) = path.col(static_cast<int>(ch[static_cast<std::size_t>(k)]));
    const auto sig = signature_level2(sub);
    for (std::size_t k = 0; k < 20; ++k) CHECK(out[s * 20 + k] == sig[k]);
  }
  CHECK(SignatureSpec{4, 60, 0}.width() == 1200);
  CHECK_FALSE(random_signature(path, SignatureSpec{4, 3, 43}) == out);
}

TEST_CASE("rft contract") {
  const std::vector<double> zero(6, 0.0);
  for (int p : {1, 3, 7}) {
    RftSpec spec{p, 17};
    const auto out = rft(zero, spec);
    REQUIRE(out.size() == static_cast<std::size_t>(14 * p));
    const double bound = 1.0 / std::sqrt(7.0 * p);
    for (int s = 0; s < p; ++s)
      for (int g = 0; g < 7; ++g) {
        CHECK(out[static_cast<std::size_t>(14 * s + g)] == 0.0);
        CHECK(out[static_cast<std::size_t>(14 * s + 7 + g)] == bound);
      }
  }
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 1 + trial % 5;
    RftSpec spec{p, gen()};
    const auto x = oracle::random_normals(gen, 12);
    const auto out = rft(x, spec);
    const double bound = 1.0 / std::sqrt(7.0 * p);
    double norm = 0;
    for (double v : out) {
      CHECK(std::abs(v) <= bound);
      norm += v * v;
    }
    CHECK(std::sqrt(norm) <= std::sqrt(2.0) + 1e-12);
    for (int s = 0; s < p; ++s) {
      const auto w = rft_projection(spec, static_cast<std::size_t>(s), 12);
      double u = 0;
      for (std::size_t i = 0; i < 12; ++i) u += w[i] * x[i];
      for (int g = 0; g < 7; ++g) {
        CHECK(std::abs(out[static_cast<std::size_t>(14 * s + g)] - bound * std::sin(kRftGammas[static_cast<std::size_t>(g)] * u)) <= 1e-12);
        CHECK(std::abs(out[static_cast<std::size_t>(14 * s + 7 + g)] - bound * std::cos(kRftGammas[static_cast<std::size_t>(g)] * u)) <= 1e-12);
      }
    }
    CHECK(out == rft(x, spec));
  }
  const std::vector<double> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(rft(bad, RftSpec{}), Error);
}

TEST_CASE("rft projections look standard normal") {
  RftSpec spec{1, 99};
  const auto w = rft_projection(spec, 0, 20000);
  double m = 0, v = 0;
  for (double x : w) m += x;
  m /= static_cast<double>(w.size());
  for (double x : w) v += (x - m) * (x - m);
  v /= static_cast<double>(w.size());
  CHECK(std::abs(m) < 0.03);
  CHECK(std::abs(v - 1.0) < 0.05);
}
