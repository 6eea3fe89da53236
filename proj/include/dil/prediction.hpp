#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dil/dataset.hpp"
#include "dil/metrics.hpp"

namespace dil {

struct EraPrediction {
  std::vector<std::string> row_ids;
  std::vector<double> scores;
  bool operator==(const EraPrediction&) const = default;
};

/// Per-era predicted scores of one model or strategy, aligned to dataset row ids.
struct PredictionSeries {
  std::string model_id;
  int layer = 0;
  std::map<int, EraPrediction> eras;
  int first_valid_era = 0;

  const EraPrediction* find(int era) const noexcept;
  bool covers(int era) const noexcept { return find(era) != nullptr; }
  bool operator==(const PredictionSeries&) const = default;
};

/// `era,id,score`, eras ascending, scores with 17 significant digits.
void write_predictions_csv(const std::filesystem::path& path, const PredictionSeries& series);
PredictionSeries read_predictions_csv(const std::filesystem::path& path, const std::string& model_id);

/// Scores every era of `series` inside [first, last] against one dataset target. Rows are
/// matched by id, so prediction files may list an era's rows in any order.
std::vector<metrics::EraScore> score_series(const PredictionSeries& series,
                                            const dataset::TemporalTabularDataset& data,
                                            std::size_t target_index, int first, int last);

}  // namespace dil
