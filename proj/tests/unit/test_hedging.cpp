#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dil/hedging.hpp"
#include "../support/oracles.hpp"

using namespace dil;
using namespace dil::hedging;

namespace {

std::vector<double> centred(const std::vector<double>& v) {
  auto r = oracle::percentile_rank(v);
  for (auto& x : r) x -= 0.5;
  return r;
}

std::vector<metrics::EraScore> history(int first, int last, double rho) {
  std::vector<metrics::EraScore> out;
  for (int e = first; e <= last; ++e) out.push_back({e, rho});
  return out;
}

}  // namespace

TEST_CASE("disagreement signals against a brute-force oracle") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 5), n = 40;
    std::vector<std::vector<double>> members;
    for (std::size_t m = 0; m < k; ++m) members.push_back(oracle::random_normals(gen, n));
    const auto sig = disagreement_signals(members);
    // exact oracle: doubled positions by counting, then integer sums and variances
    std::vector<double> sum(n, 0.0), spread(n, 0.0), sum_sq(n, 0.0);
    for (const auto& m : members)
      for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (double v : m) less += v < m[i], equal += v == m[i];
        const double p = 2 * less + equal + 1;
        sum[i] += p;
        sum_sq[i] += p * p;
      }
    for (std::size_t i = 0; i < n; ++i) spread[i] = static_cast<double>(k) * sum_sq[i] - sum[i] * sum[i];
    const auto& mean = sum;
    const auto& sd = spread;
    const auto base_ref = centred(mean), tail_ref = centred(sd);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(sig.baseline[i] == doctest::Approx(base_ref[i]).epsilon(1e-14));
      CHECK(sig.tail[i] == doctest::Approx(tail_ref[i]).epsilon(1e-14));
    }
    auto warped = members;
    for (auto& m : warped)
      for (auto& v : m) v = std::exp(v) * 5 + 1;
    const auto again = disagreement_signals(warped);
    CHECK(again.baseline == sig.baseline);
    CHECK(again.tail == sig.tail);
  }
}

TEST_CASE("disagreement signal edge cases") {
  const std::vector<double> a{0.3, -1, 2, 5, 0.1};
  const std::vector<std::vector<double>> same{a, a, a};
  const auto sig = disagreement_signals(same);
  for (double t : sig.tail) CHECK(t == 0.0);
  CHECK(sig.baseline == centred(a));

  std::vector<double> up, down;
  for (int i = 0; i < 9; ++i) up.push_back(i), down.push_back(-i);
  const std::vector<std::vector<double>> pair{up, down};
  const auto rev = disagreement_signals(pair);
  // std of {r, -r} is |r|: the extremes disagree most, the centre least
  CHECK(rev.tail[0] == rev.tail[8]);
  CHECK(rev.tail[4] < rev.tail[3]);
  CHECK(rev.tail[0] > rev.tail[1]);
  for (int i = 0; i < 4; ++i) CHECK(rev.tail[static_cast<std::size_t>(i)] > rev.tail[static_cast<std::size_t>(i + 1)]);

  const std::vector<std::vector<double>> one{a};
  try {
    disagreement_signals(one);
    FAIL("expected TooFewMembers");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooFewMembers);
  }
  const std::vector<std::vector<double>> ragged{a, {1, 2}};
  CHECK_THROWS_AS(disagreement_signals(ragged), Error);
}

TEST_CASE("static hedge") {
  std::mt19937_64 gen(2);
  const auto b = oracle::random_normals(gen, 20), t = oracle::random_normals(gen, 20);
  const auto out = static_hedge(b, t);
  for (std::size_t i = 0; i < 20; ++i) CHECK(out[i] == doctest::Approx(0.6 * b[i] + 0.4 * t[i]).epsilon(1e-15));
  const auto self = static_hedge(b, b);
  for (std::size_t i = 0; i < 20; ++i) CHECK(self[i] == doctest::Approx(b[i]).epsilon(1e-15));
  std::vector<double> neg;
  for (double v : b) neg.push_back(-v);
  const auto damped = static_hedge(b, neg);
  for (std::size_t i = 0; i < 20; ++i) CHECK(damped[i] == doctest::Approx(0.2 * b[i]).epsilon(1e-12));
  CHECK_THROWS_AS(static_hedge(b, std::vector<double>(3)), Error);
}

TEST_CASE("hedge ratio regimes") {
  const int era = 100;  // window covers eras 44..93
  CHECK(hedge_ratio(history(44, 93, 0.02), era).ratio == 0.6);
  CHECK(hedge_ratio(history(44, 93, -0.02), era).ratio == 0.0);
  auto zero = history(44, 93, 0.25);
  for (std::size_t i = 0; i < zero.size(); i += 2) zero[i].rho = -0.25;
  const auto d = hedge_ratio(zero, era);
  CHECK(d.trailing_mean == 0.0);
  CHECK(d.ratio == 0.6);
  CHECK(d.eras_used == 50);

  // eras outside the lagged window are ignored
  auto noisy = history(1, 200, -1.0);
  for (auto& s : noisy)
    if (s.era >= 44 && s.era <= 93) s.rho = 0.01;
  CHECK(hedge_ratio(noisy, era).ratio == 0.6);
  CHECK(hedge_ratio(noisy, era).eras_used == 50);

  const auto short_hist = hedge_ratio(history(45, 93, 1.0), era);
  CHECK(short_hist.insufficient_history);
  CHECK(short_hist.ratio == 0.0);
  CHECK(short_hist.eras_used == 49);
}

TEST_CASE("dynamic hedge switches at the first crossing era") {
  // tail scores negative through era 80, then strongly positive
  std::vector<metrics::EraScore> hist;
  for (int e = 1; e <= 200; ++e) hist.push_back({e, e <= 80 ? -0.1 : 0.5});
  int expected = -1;
  for (int era = 57; era <= 200 && expected < 0; ++era) {
    double s = 0;
    for (int e = era - 56; e <= era - 7; ++e) s += e <= 80 ? -0.1 : 0.5;
    if (s / 50 >= 0) expected = era;
  }
  REQUIRE(expected > 0);
  const std::vector<double> b{0.1, -0.3, 0.2}, t{-0.4, 0.4, 0.0};
  int first_on = -1;
  for (int era = 57; era <= 200; ++era) {
    const auto out = dynamic_hedge(b, t, hist, era);
    const double h = out.decision.ratio;
    CHECK((h == 0.0 || h == 0.6));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(out.scores[i] == doctest::Approx((1 - h) * b[i] + h * t[i]).epsilon(1e-15));
      CHECK(out.scores[i] >= std::min(b[i], t[i]) - 1e-15);
      CHECK(out.scores[i] <= std::max(b[i], t[i]) + 1e-15);
    }
    if (h > 0 && first_on < 0) first_on = era;
    if (first_on > 0) CHECK(h == 0.6);
  }
  CHECK(first_on == expected);
  const auto off = dynamic_hedge(b, t, history(1, 200, -0.3), 120);
  CHECK(off.scores == b);
}

TEST_CASE("hedge config validation") {
  HedgeConfig cfg;
  cfg.static_tail_weight = 1.2;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.trailing_window = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.trailing_lag = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
