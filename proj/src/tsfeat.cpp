#include "dil/tsfeat.hpp"

#include <algorithm>
#include <cmath>

#include "dil/rng.hpp"
#include "dil/stats.hpp"

namespace dil::tsfeat {

std::vector<double> ema(std::span<const double> series, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidAlpha, "ema alpha must lie in (0,1]");
  if (series.empty()) throw Error(Errc::InvalidArgument, "ema of empty series");
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (std::size_t t = 1; t < series.size(); ++t) out[t] = (1.0 - alpha) * out[t - 1] + alpha * series[t];
  return out;
}

std::vector<double> feature_performance_row(const dataset::EraBlock& block, std::size_t target_index,
                                            std::vector<std::uint8_t>* zero_variance) {
  const auto target = block.target_column(target_index);
  if (std::all_of(target.begin(), target.end(), [&](double v) { return v == target.front(); }))
    throw Error(Errc::DegenerateTarget, "era " + std::to_string(block.era) + ": constant target");
  const std::size_t m = block.features.cols();
  std::vector<double> row(m, 0.0);
  if (zero_variance) zero_variance->assign(m, 0);
  std::vector<double> column(block.size());
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < block.size(); ++i) column[i] = block.features(i, j);
    if (auto r = stats::pearson(column, target)) {
      row[j] = *r;
    } else if (zero_variance) {
      (*zero_variance)[j] = 1;
    }
  }
  return row;
}

FeaturePerformanceSeries feature_performance(const dataset::TemporalTabularDataset& data, std::size_t target_index) {
  if (target_index >= data.target_count()) throw Error(Errc::OutOfRange, "target index out of range");
  FeaturePerformanceSeries out;
  const std::size_t m = data.feature_count();
  out.values.resize(static_cast<Eigen::Index>(data.eras.size()), static_cast<Eigen::Index>(m));
  out.zero_variance = Matrix<std::uint8_t>(data.eras.size(), m);
  std::vector<std::uint8_t> flags;
  for (std::size_t t = 0; t < data.eras.size(); ++t) {
    const auto& block = data.eras[t];
    const auto row = feature_performance_row(block, target_index, &flags);
    out.eras.push_back(block.era);
    for (std::size_t j = 0; j < m; ++j) {
      out.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = row[j];
      out.zero_variance(t, j) = flags[j];
    }
  }
  return out;
}

Eigen::MatrixXd lookback_slice(const Eigen::MatrixXd& series, int t, int lookback) {
  if (t < 1 || t > series.rows()) throw Error(Errc::OutOfRange, "lookback_slice: t outside [1, T]");
  if (lookback < 0) throw Error(Errc::InvalidArgument, "lookback must be >= 0");
  const int start = std::max(1, t - lookback);
  return series.middleRows(start - 1, t - start + 1);
}

std::vector<double> signature_level2(const Eigen::MatrixXd& path) {
  if (path.rows() < 2) throw Error(Errc::PathTooShort, "signature needs at least 2 points");
  const auto c = static_cast<std::size_t>(path.cols());
  std::vector<double> out(c + c * c, 0.0);
  std::vector<double> level1(c, 0.0);  // increments accumulated before the current segment
  std::vector<double> delta(c);
  for (Eigen::Index k = 0; k + 1 < path.rows(); ++k) {
    for (std::size_t i = 0; i < c; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      delta[i] = path(k + 1, col) - path(k, col);
    }
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) out[c + i * c + j] += level1[i] * delta[j] + 0.5 * delta[i] * delta[j];
    for (std::size_t i = 0; i < c; ++i) level1[i] += delta[i];
  }
  std::copy(level1.begin(), level1.end(), out.begin());
  return out;
}

std::vector<std::size_t> signature_channels(const SignatureSpec& spec, std::size_t set, std::size_t dimension) {
  if (spec.channels < 1) throw Error(Errc::InvalidConfig, "signature channels must be >= 1");
  if (dimension == 0) throw Error(Errc::InvalidArgument, "signature source has no channels");
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(set)));
  std::vector<std::size_t> out(static_cast<std::size_t>(spec.channels));
  for (auto& ch : out) ch = static_cast<std::size_t>(rng.below(dimension));
  return out;
}

std::vector<double> random_signature(const Eigen::MatrixXd& path, const SignatureSpec& spec) {
  if (path.rows() < 2) throw Error(Errc::PathTooShort, "signature needs at least 2 points");
  if (spec.feature_sets < 1) throw Error(Errc::InvalidConfig, "feature_sets must be >= 1");
  const auto d = static_cast<std::size_t>(path.cols());
  if (static_cast<std::size_t>(spec.channels) > d)
    throw Error(Errc::InvalidConfig, "more signature channels than source dimensions");
  std::vector<double> out;
  out.reserve(spec.width());
  Eigen::MatrixXd sub(path.rows(), spec.channels);
  for (int set = 0; set < spec.feature_sets; ++set) {
    const auto channels = signature_channels(spec, static_cast<std::size_t>(set), d);
    for (std::size_t k = 0; k < channels.size(); ++k)
      sub.col(static_cast<Eigen::Index>(k)) = path.col(static_cast<Eigen::Index>(channels[k]));
    const auto sig = signature_level2(sub);
    out.insert(out.end(), sig.begin(), sig.end());
  }
  return out;
}

std::vector<double> rft_projection(const RftSpec& spec, std::size_t set, std::size_t dimension) {
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(set)));
  std::vector<double> w(dimension);
  for (auto& v : w) v = rng.normal();
  return w;
}

std::vector<double> rft(std::span<const double> x, const RftSpec& spec) {
  if (spec.feature_sets < 1) throw Error(Errc::InvalidConfig, "feature_sets must be >= 1");
  for (double v : x)
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "rft: non-finite input");
  const double scale = 1.0 / std::sqrt(7.0 * spec.feature_sets);
  std::vector<double> out;
  out.reserve(spec.width());
  for (int set = 0; set < spec.feature_sets; ++set) {
    const auto w = rft_projection(spec, static_cast<std::size_t>(set), x.size());
    double u = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) u += w[i] * x[i];
    for (double gamma : kRftGammas) out.push_back(scale * std::sin(gamma * u));
    for (double gamma : kRftGammas) out.push_back(scale * std::cos(gamma * u));
  }
  return out;
}

}  // namespace dil::tsfeat
