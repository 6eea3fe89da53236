#pragma once

#include <array>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dil/dataset.hpp"
#include "dil/prediction.hpp"
#include "dil/tsfeat.hpp"

namespace dil::factor_timing {

struct TruncationBounds {
  double lower = -0.5;
  double upper = 0.5;
  void validate() const;  // requires -0.5 < lower < upper < 0.5
};

/// Ranks the M feature forecasts to (-0.5, 0.5), optionally clamps them into the bounds,
/// and returns X_t r: one linear score per row of the era.
std::vector<double> factor_timing_predict(std::span<const double> forecasts,
                                          const dataset::FeatureMatrix& era_features,
                                          const std::optional<TruncationBounds>& bounds = {});

inline constexpr std::array<double, 5> kRidgeGrid{0.01, 0.1, 1.0, 10.0, 100.0};

/// Ridge fits over a grid of penalties; forecasts are the mean of the per-penalty forecasts.
/// Each fit has an unpenalised intercept (inputs are centred before solving).
class RidgeForecaster {
 public:
  struct Fit {
    double alpha = 0.0;
    Eigen::MatrixXd coefficients;  // F x M
    Eigen::VectorXd intercept;     // M
  };

  explicit RidgeForecaster(std::vector<Fit> fits) : fits_(std::move(fits)) {}

  const std::vector<Fit>& fits() const noexcept { return fits_; }
  std::vector<Eigen::VectorXd> predict_per_alpha(const Eigen::VectorXd& z) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& z) const;

 private:
  std::vector<Fit> fits_;
};

/// Z is T x F (inputs), Y is T x M (next-step responses). Solved through a Cholesky
/// factorisation of the primal or dual normal equations, whichever is smaller.
RidgeForecaster fit_ridge_averaged(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y,
                                   std::span<const double> grid = kRidgeGrid);

struct EmaForecaster {
  double alpha = 0.02;
};

struct SignatureForecaster {
  int channels = 4;
  double complexity = 1.0;
  int lookback = 0;  // 0 uses the whole available history
  std::uint64_t seed = 0;
};

struct RftForecaster {
  double complexity = 1.0;
  std::uint64_t seed = 0;
};

using Forecaster = std::variant<EmaForecaster, SignatureForecaster, RftForecaster>;

struct FactorTimingConfig {
  Forecaster forecaster = EmaForecaster{};
  std::optional<TruncationBounds> bounds;
  std::vector<double> ridge_grid{kRidgeGrid.begin(), kRidgeGrid.end()};
  int embargo = 15;
  int warmup = 10;  // minimum number of history eras
  std::size_t target_index = 0;

  void validate() const;
};

/// Number of transformed features for complexity c over a history of length T: ceil(c T).
std::size_t transformed_feature_count(double complexity, std::size_t history_length);

/// One-step-ahead forecast of the next feature-performance row from a T x M history.
std::vector<double> forecast_feature_performance(const Eigen::MatrixXd& history, const FactorTimingConfig& cfg);

/// For every dataset era i in [start, end]: forecasts feature performance from eras
/// <= i - embargo only, then scores era i's rows with factor_timing_predict.
PredictionSeries run_factor_timing_backtest(const dataset::TemporalTabularDataset& data,
                                            const FactorTimingConfig& cfg, int start, int end);

}  // namespace dil::factor_timing
