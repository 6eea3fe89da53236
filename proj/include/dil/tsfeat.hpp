#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dil/core.hpp"
#include "dil/dataset.hpp"

namespace dil::tsfeat {

/// y_1 = x_1, y_t = (1 - alpha) y_{t-1} + alpha x_t. Throws InvalidAlpha unless alpha in (0,1].
std::vector<double> ema(std::span<const double> series, double alpha);

/// Per-era Pearson correlation of each feature with one target.
struct FeaturePerformanceSeries {
  std::vector<int> eras;          // row t of `values` belongs to eras[t]
  Eigen::MatrixXd values;         // T x M, entries in [-1, 1]
  Matrix<std::uint8_t> zero_variance;  // 1 where the feature was constant within the era (value 0)
};

/// Single-era row of the series. Throws DegenerateTarget if the target is constant.
std::vector<double> feature_performance_row(const dataset::EraBlock& block, std::size_t target_index,
                                            std::vector<std::uint8_t>* zero_variance = nullptr);

FeaturePerformanceSeries feature_performance(const dataset::TemporalTabularDataset& data, std::size_t target_index);

/// Rows max(1, t - lookback) .. t (1-based, inclusive) of a T x d series.
Eigen::MatrixXd lookback_slice(const Eigen::MatrixXd& series, int t, int lookback);

/// Level-1 increments followed by the C x C level-2 terms (row-major) of the piecewise
/// linear path through the rows of `path` (L x C). Width C + C^2. Throws PathTooShort if L < 2.
std::vector<double> signature_level2(const Eigen::MatrixXd& path);

struct SignatureSpec {
  int channels = 4;
  int feature_sets = 1;
  std::uint64_t seed = 0;

  std::size_t width() const noexcept {
    const auto c = static_cast<std::size_t>(channels);
    return static_cast<std::size_t>(feature_sets) * (c + c * c);
  }
};

/// Channels (with replacement) drawn for one feature set; keyed by (seed, set).
std::vector<std::size_t> signature_channels(const SignatureSpec& spec, std::size_t set, std::size_t dimension);

/// Concatenated level-2 signatures of `feature_sets` random channel subsets.
std::vector<double> random_signature(const Eigen::MatrixXd& path, const SignatureSpec& spec);

inline constexpr std::array<double, 7> kRftGammas{0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};

struct RftSpec {
  int feature_sets = 1;
  std::uint64_t seed = 0;

  std::size_t width() const noexcept { return 14 * static_cast<std::size_t>(feature_sets); }
};

/// Projection vector w ~ N(0, I_d) for one feature set; keyed by (seed, set).
std::vector<double> rft_projection(const RftSpec& spec, std::size_t set, std::size_t dimension);

/// Per set: u = w.x, then sin(gamma u) for the 7 gammas and cos(gamma u) for the same
/// gammas, all scaled by 1/sqrt(7p).
std::vector<double> rft(std::span<const double> x, const RftSpec& spec);

}  // namespace dil::tsfeat
