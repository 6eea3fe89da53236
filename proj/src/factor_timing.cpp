#include "dil/factor_timing.hpp"

#include <algorithm>
#include <cmath>

#include "dil/stats.hpp"

namespace dil::factor_timing {

namespace {

Eigen::MatrixXd transformed_history(const Eigen::MatrixXd& history, const SignatureForecaster& f,
                                    std::size_t feature_count) {
  const auto h = static_cast<int>(history.rows());
  const auto c = static_cast<std::size_t>(f.channels);
  const std::size_t per_set = c + c * c;
  tsfeat::SignatureSpec spec;
  spec.channels = f.channels;
  spec.feature_sets = static_cast<int>((feature_count + per_set - 1) / per_set);
  spec.seed = f.seed;
  const int lookback = f.lookback > 0 ? f.lookback : h;
  // row k holds the transform of the path ending at time step k + 2 (1-based)
  Eigen::MatrixXd out(h - 1, static_cast<Eigen::Index>(feature_count));
  for (int t = 2; t <= h; ++t) {
    const auto sig = tsfeat::random_signature(tsfeat::lookback_slice(history, t, lookback), spec);
    for (std::size_t j = 0; j < feature_count; ++j) out(t - 2, static_cast<Eigen::Index>(j)) = sig[j];
  }
  return out;
}

Eigen::MatrixXd transformed_history(const Eigen::MatrixXd& history, const RftForecaster& f,
                                    std::size_t feature_count) {
  tsfeat::RftSpec spec;
  spec.feature_sets = static_cast<int>((feature_count + 13) / 14);
  spec.seed = f.seed;
  Eigen::MatrixXd out(history.rows(), static_cast<Eigen::Index>(feature_count));
  std::vector<double> row(static_cast<std::size_t>(history.cols()));
  for (Eigen::Index t = 0; t < history.rows(); ++t) {
    for (Eigen::Index j = 0; j < history.cols(); ++j) row[static_cast<std::size_t>(j)] = history(t, j);
    const auto z = tsfeat::rft(row, spec);
    for (std::size_t j = 0; j < feature_count; ++j) out(t, static_cast<Eigen::Index>(j)) = z[j];
  }
  return out;
}

// Regresses the row following each transformed step on that step, then applies the fit
// to the final step. `first_step` is the history row aligned with z.row(0).
std::vector<double> ridge_forecast(const Eigen::MatrixXd& history, const Eigen::MatrixXd& z, Eigen::Index first_step,
                                   std::span<const double> grid) {
  const Eigen::Index pairs = z.rows() - 1;
  if (pairs < 2) throw Error(Errc::InsufficientHistory, "factor timing ridge needs at least 2 training pairs");
  const Eigen::MatrixXd inputs = z.topRows(pairs);
  const Eigen::MatrixXd responses = history.middleRows(first_step + 1, pairs);
  const auto model = fit_ridge_averaged(inputs, responses, grid);
  const Eigen::VectorXd forecast = model.predict(z.row(z.rows() - 1).transpose());
  return {forecast.data(), forecast.data() + forecast.size()};
}

}  // namespace

void TruncationBounds::validate() const {
  if (!(-0.5 < lower && lower < upper && upper < 0.5))
    throw Error(Errc::InvalidConfig, "truncation bounds must satisfy -0.5 < lower < upper < 0.5");
}

std::vector<double> factor_timing_predict(std::span<const double> forecasts, const dataset::FeatureMatrix& era_features,
                                          const std::optional<TruncationBounds>& bounds) {
  if (forecasts.size() != era_features.cols())
    throw Error(Errc::DimensionMismatch, "factor timing: " + std::to_string(forecasts.size()) + " forecasts for " +
                                             std::to_string(era_features.cols()) + " features");
  auto weights = stats::centred_rank(forecasts);
  if (bounds) {
    bounds->validate();
    for (auto& w : weights) w = std::max(std::min(w, bounds->upper), bounds->lower);
  }
  std::vector<double> scores(era_features.rows(), 0.0);
  for (std::size_t i = 0; i < era_features.rows(); ++i) {
    const auto row = era_features.row(i);
    double z = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) z += row[j] * weights[j];
    scores[i] = z;
  }
  return scores;
}

std::vector<Eigen::VectorXd> RidgeForecaster::predict_per_alpha(const Eigen::VectorXd& z) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(fits_.size());
  for (const auto& fit : fits_) {
    if (z.size() != fit.coefficients.rows()) throw Error(Errc::DimensionMismatch, "ridge input width mismatch");
    out.push_back(fit.intercept + fit.coefficients.transpose() * z);
  }
  return out;
}

Eigen::VectorXd RidgeForecaster::predict(const Eigen::VectorXd& z) const {
  const auto per_alpha = predict_per_alpha(z);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(per_alpha.front().size());
  for (const auto& v : per_alpha) sum += v;
  return sum / static_cast<double>(per_alpha.size());
}

RidgeForecaster fit_ridge_averaged(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, std::span<const double> grid) {
  if (z.rows() != y.rows()) throw Error(Errc::DimensionMismatch, "ridge: Z and Y row counts differ");
  if (z.rows() < 2) throw Error(Errc::InsufficientHistory, "ridge needs at least 2 observations");
  if (grid.empty()) throw Error(Errc::InvalidConfig, "ridge grid is empty");
  if (!z.allFinite() || !y.allFinite()) throw Error(Errc::InvalidArgument, "ridge inputs must be finite");

  const Eigen::RowVectorXd z_mean = z.colwise().mean();
  const Eigen::RowVectorXd y_mean = y.colwise().mean();
  const Eigen::MatrixXd zc = z.rowwise() - z_mean;
  const Eigen::MatrixXd yc = y.rowwise() - y_mean;
  const bool primal = z.cols() <= z.rows();
  const Eigen::MatrixXd gram = primal ? Eigen::MatrixXd(zc.transpose() * zc) : Eigen::MatrixXd(zc * zc.transpose());
  const Eigen::MatrixXd rhs = primal ? Eigen::MatrixXd(zc.transpose() * yc) : yc;

  std::vector<RidgeForecaster::Fit> fits;
  for (double alpha : grid) {
    if (!(alpha > 0.0)) throw Error(Errc::InvalidConfig, "ridge penalties must be > 0");
    Eigen::MatrixXd system = gram;
    system.diagonal().array() += alpha;
    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success) throw Error(Errc::SingularSystem, "ridge normal equations not positive definite");
    RidgeForecaster::Fit fit;
    fit.alpha = alpha;
    fit.coefficients = primal ? Eigen::MatrixXd(llt.solve(rhs)) : Eigen::MatrixXd(zc.transpose() * llt.solve(rhs));
    if (!fit.coefficients.allFinite()) throw Error(Errc::SingularSystem, "ridge solve produced non-finite values");
    fit.intercept = (y_mean - z_mean * fit.coefficients).transpose();
    fits.push_back(std::move(fit));
  }
  return RidgeForecaster(std::move(fits));
}

void FactorTimingConfig::validate() const {
  if (bounds) bounds->validate();
  if (embargo < 0) throw Error(Errc::InvalidConfig, "embargo must be >= 0");
  if (warmup < 1) throw Error(Errc::InvalidConfig, "warmup must be >= 1");
  if (const auto* e = std::get_if<EmaForecaster>(&forecaster)) {
    if (!(e->alpha > 0.0 && e->alpha <= 1.0)) throw Error(Errc::InvalidAlpha, "ema alpha must lie in (0,1]");
  } else if (const auto* s = std::get_if<SignatureForecaster>(&forecaster)) {
    if (s->channels < 2) throw Error(Errc::InvalidConfig, "signature channels must be >= 2");
    if (!(s->complexity > 0.0)) throw Error(Errc::InvalidConfig, "complexity must be > 0");
    if (s->lookback < 0) throw Error(Errc::InvalidConfig, "lookback must be >= 0");
  } else if (const auto* r = std::get_if<RftForecaster>(&forecaster)) {
    if (!(r->complexity > 0.0)) throw Error(Errc::InvalidConfig, "complexity must be > 0");
  }
}

std::size_t transformed_feature_count(double complexity, std::size_t history_length) {
  if (!(complexity > 0.0)) throw Error(Errc::InvalidConfig, "complexity must be > 0");
  const double raw = complexity * static_cast<double>(history_length);
  // guard against c*T landing a hair above an integer
  const double nearest = std::round(raw);
  const double count = std::abs(raw - nearest) < 1e-9 ? nearest : std::ceil(raw);
  return std::max<std::size_t>(1, static_cast<std::size_t>(count));
}

std::vector<double> forecast_feature_performance(const Eigen::MatrixXd& history, const FactorTimingConfig& cfg) {
  if (history.rows() < 1) throw Error(Errc::InsufficientHistory, "empty feature-performance history");
  if (const auto* e = std::get_if<EmaForecaster>(&cfg.forecaster)) {
    std::vector<double> out(static_cast<std::size_t>(history.cols()));
    for (Eigen::Index j = 0; j < history.cols(); ++j) {
      double state = history(0, j);
      for (Eigen::Index t = 1; t < history.rows(); ++t) state = (1.0 - e->alpha) * state + e->alpha * history(t, j);
      out[static_cast<std::size_t>(j)] = state;
    }
    return out;
  }
  const auto h = static_cast<std::size_t>(history.rows());
  if (const auto* s = std::get_if<SignatureForecaster>(&cfg.forecaster)) {
    if (h < 4) throw Error(Errc::InsufficientHistory, "signature forecaster needs at least 4 history eras");
    const auto z = transformed_history(history, *s, transformed_feature_count(s->complexity, h));
    return ridge_forecast(history, z, 1, cfg.ridge_grid);
  }
  const auto& r = std::get<RftForecaster>(cfg.forecaster);
  if (h < 3) throw Error(Errc::InsufficientHistory, "rft forecaster needs at least 3 history eras");
  const auto z = transformed_history(history, r, transformed_feature_count(r.complexity, h));
  return ridge_forecast(history, z, 0, cfg.ridge_grid);
}

PredictionSeries run_factor_timing_backtest(const dataset::TemporalTabularDataset& data,
                                            const FactorTimingConfig& cfg, int start, int end) {
  cfg.validate();
  if (start > end) throw Error(Errc::InvalidArgument, "factor timing: start after end");
  const auto perf = tsfeat::feature_performance(data, cfg.target_index);

  PredictionSeries series;
  series.model_id = "factor_timing";
  series.layer = 1;
  for (const auto& block : data.eras) {
    if (block.era < start || block.era > end) continue;
    const int cutoff = block.era - cfg.embargo;
    const auto history_len = static_cast<Eigen::Index>(
        std::upper_bound(perf.eras.begin(), perf.eras.end(), cutoff) - perf.eras.begin());
    if (history_len < cfg.warmup)
      throw Error(Errc::InsufficientHistory, "era " + std::to_string(block.era) + ": only " +
                                                 std::to_string(history_len) + " history eras before the embargo");
    const auto forecast = forecast_feature_performance(perf.values.topRows(history_len), cfg);
    EraPrediction pred;
    pred.row_ids = block.row_ids;
    pred.scores = factor_timing_predict(forecast, block.features, cfg.bounds);
    series.eras.emplace(block.era, std::move(pred));
  }
  if (!series.eras.empty()) series.first_valid_era = series.eras.begin()->first;
  return series;
}

}  // namespace dil::factor_timing
