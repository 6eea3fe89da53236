#include "dil/prediction.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace dil {

const EraPrediction* PredictionSeries::find(int era) const noexcept {
  auto it = eras.find(era);
  return it == eras.end() ? nullptr : &it->second;
}

void write_predictions_csv(const std::filesystem::path& path, const PredictionSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::MalformedFile, "cannot write " + path.string());
  out << "era,id,score\n";
  for (const auto& [era, pred] : series.eras)
    for (std::size_t i = 0; i < pred.scores.size(); ++i)
      out << era << ',' << pred.row_ids[i] << ',' << format_double(pred.scores[i]) << '\n';
}

PredictionSeries read_predictions_csv(const std::filesystem::path& path, const std::string& model_id) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MalformedFile, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::MalformedFile, path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "era,id,score") throw Error(Errc::MalformedFile, path.string() + ": header must be era,id,score");
  PredictionSeries series;
  series.model_id = model_id;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
      throw Error(Errc::MalformedFile, path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    char* end = nullptr;
    const std::string era_text = line.substr(0, c1);
    const long era = std::strtol(era_text.c_str(), &end, 10);
    if (era_text.empty() || *end != '\0' || era < 1)
      throw Error(Errc::MalformedFile, path.string() + ":" + std::to_string(line_no) + ": bad era");
    const std::string score_text = line.substr(c2 + 1);
    const double score = std::strtod(score_text.c_str(), &end);
    if (score_text.empty() || *end != '\0')
      throw Error(Errc::MalformedFile, path.string() + ":" + std::to_string(line_no) + ": bad score");
    auto& pred = series.eras[static_cast<int>(era)];
    pred.row_ids.push_back(line.substr(c1 + 1, c2 - c1 - 1));
    pred.scores.push_back(score);
  }
  if (!series.eras.empty()) series.first_valid_era = series.eras.begin()->first;
  return series;
}

std::vector<metrics::EraScore> score_series(const PredictionSeries& series,
                                            const dataset::TemporalTabularDataset& data,
                                            std::size_t target_index, int first, int last) {
  if (target_index >= data.target_count()) throw Error(Errc::OutOfRange, "scoring target out of range");
  std::vector<metrics::EraScore> scores;
  for (auto it = series.eras.lower_bound(first); it != series.eras.end() && it->first <= last; ++it) {
    const auto& [era, pred] = *it;
    const auto& block = data.era(era);
    if (pred.scores.size() != block.size())
      throw Error(Errc::DimensionMismatch, series.model_id + ": era " + std::to_string(era) + " row count differs");
    std::vector<double> target(block.size());
    if (pred.row_ids == block.row_ids) {
      target = block.target_column(target_index);
    } else {
      std::unordered_map<std::string, std::size_t> index;
      for (std::size_t i = 0; i < block.size(); ++i) index.emplace(block.row_ids[i], i);
      for (std::size_t i = 0; i < pred.row_ids.size(); ++i) {
        auto hit = index.find(pred.row_ids[i]);
        if (hit == index.end())
          throw Error(Errc::MalformedFile, series.model_id + ": unknown id '" + pred.row_ids[i] + "' in era " +
                                               std::to_string(era));
        target[i] = block.targets(hit->second, target_index);
      }
    }
    scores.push_back({era, metrics::era_score(pred.scores, target)});
  }
  return scores;
}

}  // namespace dil
