#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dil/core.hpp"

namespace dil::dataset {

/// Legal centred target bins.
inline constexpr std::array<double, 5> kTargetBins{-0.5, -0.25, 0.0, 0.25, 0.5};

using FeatureMatrix = Matrix<std::int8_t>;
using TargetMatrix = Matrix<double>;

/// All rows observed in one era (week).
struct EraBlock {
  int era = 0;
  std::vector<std::string> row_ids;
  FeatureMatrix features;  // N x M, values in -2..2
  TargetMatrix targets;    // N x K, values in kTargetBins

  std::size_t size() const noexcept { return row_ids.size(); }
  std::vector<double> target_column(std::size_t k) const;
  bool operator==(const EraBlock&) const = default;
};

struct TemporalTabularDataset {
  std::vector<EraBlock> eras;  // ascending by era
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::map<std::string, std::vector<std::size_t>> feature_groups;  // sorted indices

  std::size_t feature_count() const noexcept { return feature_names.size(); }
  std::size_t target_count() const noexcept { return target_names.size(); }

  std::vector<int> era_indices() const;
  const EraBlock* find_era(int era) const noexcept;
  const EraBlock& era(int era) const;  // throws OutOfRange
  std::size_t target_index(const std::string& name) const;

  /// Throws on any broken invariant (era ordering, shapes, bins, ids, groups).
  void validate() const;

  bool operator==(const TemporalTabularDataset&) const = default;
};

bool is_legal_feature(std::int8_t value) noexcept;
bool is_legal_target(double value) noexcept;

// ---- file format -----------------------------------------------------------------------

/// Reads `era,id,<features...>,<targets...>` CSV. Columns whose name starts with "target"
/// are targets. An optional sidecar lists `group: feature,feature,...` per line.
TemporalTabularDataset load_dataset(const std::filesystem::path& csv,
                                    const std::optional<std::filesystem::path>& groups = {});

void save_dataset(const TemporalTabularDataset& data, const std::filesystem::path& csv,
                  const std::optional<std::filesystem::path>& groups = {});

std::map<std::string, std::vector<std::size_t>> load_groups(
    const std::filesystem::path& path, const std::vector<std::string>& feature_names);

// ---- sampling --------------------------------------------------------------------------

enum class RowSampling { All, DropMedian };

struct SamplingScheme {
  RowSampling kind = RowSampling::All;
  int era_stride = 1;
  int era_offset = 0;

  void validate() const;
};

/// Indices of the rows kept by `scheme`. Throws EmptyEraAfterSampling when none remain.
std::vector<std::size_t> row_sample_indices(const EraBlock& block, const SamplingScheme& scheme,
                                            std::size_t target_index);

/// All keeps the block as is; DropMedian keeps rows whose target is not the median bin (0).
EraBlock apply_row_sampling(const EraBlock& block, const SamplingScheme& scheme,
                            std::size_t target_index);

/// Regular era sampling: keeps eras whose position in `available` is congruent to
/// `offset` modulo `stride`.
std::vector<int> select_training_eras(const std::vector<int>& available, int stride, int offset);

enum class FeatureSampleKind { AllFeatures, RandomFraction, JackknifeDrop };

struct FeatureSampleSpec {
  FeatureSampleKind kind = FeatureSampleKind::AllFeatures;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::string group;

  static FeatureSampleSpec all() { return {}; }
  static FeatureSampleSpec random_fraction(double fraction, std::uint64_t seed) {
    return {FeatureSampleKind::RandomFraction, fraction, seed, {}};
  }
  static FeatureSampleSpec jackknife(std::string group) {
    return {FeatureSampleKind::JackknifeDrop, 1.0, 0, std::move(group)};
  }
};

/// Sorted feature indices selected by `spec`.
std::vector<std::size_t> resolve_feature_sample(const FeatureSampleSpec& spec,
                                                const TemporalTabularDataset& data);

// ---- synthetic stream ------------------------------------------------------------------

enum class RegimeMode { Resample, Flip };

struct SynthConfig {
  int eras = 200;
  int rows_min = 100;
  int rows_max = 150;
  int features = 20;
  int groups = 4;
  int targets = 1;
  int informative_per_regime = 5;
  std::vector<int> regime_switch_eras;  // first era of each new regime
  RegimeMode regime_mode = RegimeMode::Resample;
  double noise_sigma = 1.0;
  std::array<double, 5> target_proportions{0.05, 0.20, 0.50, 0.20, 0.05};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Latent scores behind each generated target, kept for construction oracles.
struct SyntheticStream {
  TemporalTabularDataset data;
  std::map<int, Matrix<double>> latent;  // era -> N x K latent scores
  std::vector<std::vector<double>> regime_weights;  // per regime, length M (target 0)
};

/// Features iid uniform over the 5 bins; latent s = w.x / sqrt(2 |w|^2) + noise_sigma * eps
/// with sparse regime weights; targets are quantile-cut ranks of s into the 5 bins.
SyntheticStream generate_synthetic_stream_detailed(const SynthConfig& cfg);
TemporalTabularDataset generate_synthetic_stream(const SynthConfig& cfg);

/// Quantile cut positions for N sorted rows: bin b covers [cut[b], cut[b+1]).
std::array<std::size_t, 6> target_bin_cuts(std::size_t n, const std::array<double, 5>& proportions);

}  // namespace dil::dataset
