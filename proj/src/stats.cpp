#include "dil/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dil/core.hpp"

namespace dil::stats {

namespace {

// Calls emit(index, i + j + 2) for every member of each tie block spanning sorted
// positions i..j (0-based), i.e. twice the average 1-based position.
template <class T, class Emit>
void tie_blocks(std::span<const T> values, Emit emit) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) emit(order[k], i + j + 2);
    i = j + 1;
  }
}

template <class T>
std::vector<double> percentile_rank_impl(std::span<const T> values) {
  const auto n = static_cast<double>(values.size());
  std::vector<double> ranks(values.size());
  tie_blocks(values, [&](std::size_t idx, std::size_t twice) {
    ranks[idx] = (0.5 * static_cast<double>(twice) - 0.5) / n;
  });
  return ranks;
}

}  // namespace

std::vector<double> percentile_rank(std::span<const double> values) { return percentile_rank_impl(values); }

std::vector<double> percentile_rank(std::span<const std::int64_t> values) { return percentile_rank_impl(values); }

std::vector<std::int64_t> doubled_positions(std::span<const double> values) {
  std::vector<std::int64_t> out(values.size());
  tie_blocks(values, [&](std::size_t idx, std::size_t twice) { out[idx] = static_cast<std::int64_t>(twice); });
  return out;
}

std::vector<double> centred_rank(std::span<const double> values) {
  auto ranks = percentile_rank(values);
  for (auto& r : ranks) r -= 0.5;
  return ranks;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::InvalidArgument, "mean of empty sequence");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double population_std(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::InvalidArgument, "std of empty sequence");
  const double ref = values.front();
  double shift_sum = 0.0;
  for (double v : values) shift_sum += v - ref;
  const double shift_mean = shift_sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) {
    const double d = (v - ref) - shift_mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(values.size()));
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  const double ra = a.front();
  const double rb = b.front();
  double sa = 0.0;
  double sb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += a[i] - ra;
    sb += b[i] - rb;
  }
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double saa = 0.0;
  double sbb = 0.0;
  double sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = (a[i] - ra) - ma;
    const double db = (b[i] - rb) - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::InvalidArgument, "inverse_normal_cdf: p outside (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > p_high) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace dil::stats
