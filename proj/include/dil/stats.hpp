#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dil::stats {

/// Percentile ranks in (0,1): (position - 0.5) / N with 1-based positions and the
/// average position for tied values.
std::vector<double> percentile_rank(std::span<const double> values);

std::vector<double> percentile_rank(std::span<const std::int64_t> values);

/// Twice the average 1-based sorted position of each value (ties share the average).
/// Exact integers, so sums across rankings compare without rounding.
std::vector<std::int64_t> doubled_positions(std::span<const double> values);

/// percentile_rank shifted to (-0.5, 0.5).
std::vector<double> centred_rank(std::span<const double> values);

double mean(std::span<const double> values);

/// Population standard deviation (divides by N).
double population_std(std::span<const double> values);

/// Pearson correlation; nullopt when either side has zero variance. Deviations are taken
/// relative to the first element before averaging so that constant inputs give exactly
/// zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// Inverse of the standard normal CDF, Acklam's rational approximation
/// (absolute error below 1.2e-9 on (0,1)). Requires 0 < p < 1.
double inverse_normal_cdf(double p);

}  // namespace dil::stats
