#include "dil/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include "dil/rng.hpp"

namespace dil::dataset {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

const char* target_text(double v) {
  if (v == -0.5) return "-0.5";
  if (v == -0.25) return "-0.25";
  if (v == 0.0) return "0";
  if (v == 0.25) return "0.25";
  return "0.5";
}

constexpr std::array<const char*, 10> kGroupNames{
    "intelligence", "charisma", "strength", "dexterity", "constitution",
    "wisdom",       "agility",  "serenity", "sunshine",  "rain"};

}  // namespace

std::vector<double> EraBlock::target_column(std::size_t k) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = targets(i, k);
  return out;
}

bool is_legal_feature(std::int8_t value) noexcept { return value >= -2 && value <= 2; }

bool is_legal_target(double value) noexcept {
  return std::find(kTargetBins.begin(), kTargetBins.end(), value) != kTargetBins.end();
}

std::vector<int> TemporalTabularDataset::era_indices() const {
  std::vector<int> out;
  out.reserve(eras.size());
  for (const auto& block : eras) out.push_back(block.era);
  return out;
}

const EraBlock* TemporalTabularDataset::find_era(int era) const noexcept {
  auto it = std::lower_bound(eras.begin(), eras.end(), era,
                             [](const EraBlock& b, int e) { return b.era < e; });
  if (it == eras.end() || it->era != era) return nullptr;
  return &*it;
}

const EraBlock& TemporalTabularDataset::era(int era) const {
  if (const auto* block = find_era(era)) return *block;
  throw Error(Errc::OutOfRange, "era " + std::to_string(era) + " not in dataset");
}

std::size_t TemporalTabularDataset::target_index(const std::string& name) const {
  auto it = std::find(target_names.begin(), target_names.end(), name);
  if (it == target_names.end()) throw Error(Errc::InvalidConfig, "unknown target '" + name + "'");
  return static_cast<std::size_t>(it - target_names.begin());
}

void TemporalTabularDataset::validate() const {
  const std::size_t m = feature_count();
  const std::size_t k = target_count();
  int previous = 0;
  for (const auto& block : eras) {
    const std::string ctx = "era " + std::to_string(block.era);
    if (block.era <= previous) throw Error(Errc::MalformedFile, ctx + ": eras must be strictly increasing and >= 1");
    previous = block.era;
    if (block.size() == 0) throw Error(Errc::MalformedFile, ctx + ": no rows");
    if (block.features.rows() != block.size() || block.features.cols() != m)
      throw Error(Errc::MalformedFile, ctx + ": feature matrix shape mismatch");
    if (block.targets.rows() != block.size() || block.targets.cols() != k)
      throw Error(Errc::MalformedFile, ctx + ": target matrix shape mismatch");
    for (auto v : block.features.data())
      if (!is_legal_feature(v)) throw Error(Errc::IllegalBinValue, ctx + ": feature value " + std::to_string(v));
    for (auto v : block.targets.data())
      if (!is_legal_target(v)) throw Error(Errc::IllegalBinValue, ctx + ": target value " + format_double(v));
    std::unordered_set<std::string_view> seen;
    for (const auto& id : block.row_ids)
      if (!seen.insert(id).second) throw Error(Errc::DuplicateRowId, ctx + ": duplicate id '" + id + "'");
  }
  if (!feature_groups.empty()) {
    std::vector<bool> covered(m, false);
    for (const auto& [name, members] : feature_groups)
      for (auto j : members) {
        if (j >= m) throw Error(Errc::MalformedFile, "group '" + name + "' references feature " + std::to_string(j));
        covered[j] = true;
      }
    for (std::size_t j = 0; j < m; ++j)
      if (!covered[j]) throw Error(Errc::MalformedFile, "feature '" + feature_names[j] + "' belongs to no group");
  }
}

// ---- file format -----------------------------------------------------------------------

TemporalTabularDataset load_dataset(const std::filesystem::path& csv,
                                    const std::optional<std::filesystem::path>& groups) {
  std::ifstream in(csv);
  if (!in) throw Error(Errc::MalformedFile, "cannot open " + csv.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::MalformedFile, csv.string() + ": empty file");
  const auto header = split(trim(line), ',');
  if (header.size() < 4 || trim(header[0]) != "era" || trim(header[1]) != "id")
    throw Error(Errc::MalformedFile, where(csv, 1) + ": header must start with era,id");

  TemporalTabularDataset data;
  std::vector<bool> is_target;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const std::string name(trim(header[c]));
    if (name.empty()) throw Error(Errc::MalformedFile, where(csv, 1) + ": empty column name");
    const bool target = name.rfind("target", 0) == 0;
    if (!target && !data.target_names.empty())
      throw Error(Errc::MalformedFile, where(csv, 1) + ": feature column '" + name + "' after targets");
    (target ? data.target_names : data.feature_names).push_back(name);
    is_target.push_back(target);
  }
  if (data.feature_names.empty() || data.target_names.empty())
    throw Error(Errc::MalformedFile, where(csv, 1) + ": need at least one feature and one target");

  const std::size_t m = data.feature_count();
  const std::size_t k = data.target_count();
  std::map<int, EraBlock> blocks;
  std::vector<std::int8_t> frow(m);
  std::vector<double> trow(k);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split(body, ',');
    if (fields.size() != header.size())
      throw Error(Errc::MalformedFile, where(csv, line_no) + ": expected " + std::to_string(header.size()) +
                                           " fields, got " + std::to_string(fields.size()));
    int era = 0;
    const auto era_text = trim(fields[0]);
    auto [p, ec] = std::from_chars(era_text.data(), era_text.data() + era_text.size(), era);
    if (ec != std::errc{} || p != era_text.data() + era_text.size() || era < 1)
      throw Error(Errc::MalformedFile, where(csv, line_no) + ": bad era '" + std::string(era_text) + "'");
    const std::string id(trim(fields[1]));
    if (id.empty()) throw Error(Errc::MalformedFile, where(csv, line_no) + ": empty id");

    for (std::size_t j = 0; j < m; ++j) {
      const auto text = trim(fields[2 + j]);
      if (text.empty()) throw Error(Errc::MalformedFile, where(csv, line_no) + ": missing feature value");
      int value = 0;
      auto [q, ec2] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec2 != std::errc{} || q != text.data() + text.size() || value < -2 || value > 2)
        throw Error(Errc::IllegalBinValue, where(csv, line_no) + ": feature value '" + std::string(text) + "'");
      frow[j] = static_cast<std::int8_t>(value);
    }
    for (std::size_t t = 0; t < k; ++t) {
      const std::string text(trim(fields[2 + m + t]));
      if (text.empty()) throw Error(Errc::MalformedFile, where(csv, line_no) + ": missing target value");
      char* end = nullptr;
      const double value = std::strtod(text.c_str(), &end);
      if (end != text.c_str() + text.size() || !is_legal_target(value))
        throw Error(Errc::IllegalBinValue, where(csv, line_no) + ": target value '" + text + "'");
      trow[t] = value;
    }
    auto& block = blocks[era];
    block.era = era;
    block.row_ids.push_back(id);
    block.features.append_row(frow);
    block.targets.append_row(trow);
  }
  for (auto& [era, block] : blocks) data.eras.push_back(std::move(block));
  if (groups) data.feature_groups = load_groups(*groups, data.feature_names);
  data.validate();
  return data;
}

std::map<std::string, std::vector<std::size_t>> load_groups(const std::filesystem::path& path,
                                                            const std::vector<std::string>& feature_names) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MalformedFile, "cannot open " + path.string());
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < feature_names.size(); ++j) index[feature_names[j]] = j;

  std::map<std::string, std::vector<std::size_t>> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto colon = body.find(':');
    if (colon == std::string_view::npos)
      throw Error(Errc::MalformedFile, where(path, line_no) + ": expected 'group: features'");
    const std::string name(trim(body.substr(0, colon)));
    if (name.empty()) throw Error(Errc::MalformedFile, where(path, line_no) + ": empty group name");
    std::set<std::size_t> members;
    for (auto item : split(body.substr(colon + 1), ',')) {
      const std::string feature(trim(item));
      if (feature.empty()) continue;
      auto it = index.find(feature);
      if (it == index.end())
        throw Error(Errc::MalformedFile, where(path, line_no) + ": unknown feature '" + feature + "'");
      members.insert(it->second);
    }
    auto& slot = groups[name];
    slot.insert(slot.end(), members.begin(), members.end());
    std::sort(slot.begin(), slot.end());
    slot.erase(std::unique(slot.begin(), slot.end()), slot.end());
  }
  return groups;
}

void save_dataset(const TemporalTabularDataset& data, const std::filesystem::path& csv,
                  const std::optional<std::filesystem::path>& groups) {
  data.validate();
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw Error(Errc::MalformedFile, "cannot write " + csv.string());
  out << "era,id";
  for (const auto& name : data.feature_names) out << ',' << name;
  for (const auto& name : data.target_names) out << ',' << name;
  out << '\n';
  for (const auto& block : data.eras) {
    for (std::size_t i = 0; i < block.size(); ++i) {
      out << block.era << ',' << block.row_ids[i];
      for (auto v : block.features.row(i)) out << ',' << static_cast<int>(v);
      for (auto v : block.targets.row(i)) out << ',' << target_text(v);
      out << '\n';
    }
  }
  if (!out) throw Error(Errc::MalformedFile, "write failed: " + csv.string());

  if (groups) {
    std::ofstream g(*groups, std::ios::binary);
    if (!g) throw Error(Errc::MalformedFile, "cannot write " + groups->string());
    for (const auto& [name, members] : data.feature_groups) {
      g << name << ':';
      for (std::size_t i = 0; i < members.size(); ++i)
        g << (i ? "," : " ") << data.feature_names[members[i]];
      g << '\n';
    }
  }
}

// ---- sampling --------------------------------------------------------------------------

void SamplingScheme::validate() const {
  if (era_stride < 1) throw Error(Errc::InvalidConfig, "era_stride must be >= 1");
  if (era_offset < 0 || era_offset >= era_stride)
    throw Error(Errc::InvalidConfig, "era_offset must lie in [0, era_stride)");
}

std::vector<std::size_t> row_sample_indices(const EraBlock& block, const SamplingScheme& scheme,
                                            std::size_t target_index) {
  if (target_index >= block.targets.cols())
    throw Error(Errc::OutOfRange, "target index " + std::to_string(target_index));
  std::vector<std::size_t> keep;
  keep.reserve(block.size());
  for (std::size_t i = 0; i < block.size(); ++i)
    if (scheme.kind == RowSampling::All || block.targets(i, target_index) != 0.0) keep.push_back(i);
  if (keep.empty())
    throw Error(Errc::EmptyEraAfterSampling, "era " + std::to_string(block.era) + " has only median targets");
  return keep;
}

EraBlock apply_row_sampling(const EraBlock& block, const SamplingScheme& scheme, std::size_t target_index) {
  const auto keep = row_sample_indices(block, scheme, target_index);
  if (keep.size() == block.size()) return block;

  EraBlock out;
  out.era = block.era;
  out.row_ids.reserve(keep.size());
  for (auto i : keep) out.row_ids.push_back(block.row_ids[i]);
  out.features = block.features.select_rows(keep);
  out.targets = block.targets.select_rows(keep);
  return out;
}

std::vector<int> select_training_eras(const std::vector<int>& available, int stride, int offset) {
  if (stride < 1 || offset < 0 || offset >= stride)
    throw Error(Errc::InvalidArgument, "select_training_eras: need stride >= 1 and 0 <= offset < stride");
  std::vector<int> out;
  for (std::size_t pos = static_cast<std::size_t>(offset); pos < available.size();
       pos += static_cast<std::size_t>(stride))
    out.push_back(available[pos]);
  return out;
}

std::vector<std::size_t> resolve_feature_sample(const FeatureSampleSpec& spec, const TemporalTabularDataset& data) {
  const std::size_t m = data.feature_count();
  switch (spec.kind) {
    case FeatureSampleKind::AllFeatures: {
      std::vector<std::size_t> all(m);
      std::iota(all.begin(), all.end(), std::size_t{0});
      return all;
    }
    case FeatureSampleKind::RandomFraction: {
      if (!(spec.fraction > 0.0 && spec.fraction <= 1.0))
        throw Error(Errc::InvalidConfig, "feature fraction must lie in (0,1]");
      const auto count = static_cast<std::size_t>(std::floor(spec.fraction * static_cast<double>(m)));
      if (count == 0) throw Error(Errc::InvalidConfig, "feature fraction selects no features");
      Rng rng(spec.seed);
      return rng.sample_without_replacement(m, count);
    }
    case FeatureSampleKind::JackknifeDrop: {
      auto it = data.feature_groups.find(spec.group);
      if (it == data.feature_groups.end()) throw Error(Errc::UnknownGroup, "no feature group '" + spec.group + "'");
      std::vector<bool> dropped(m, false);
      for (auto j : it->second) dropped[j] = true;
      std::vector<std::size_t> out;
      for (std::size_t j = 0; j < m; ++j)
        if (!dropped[j]) out.push_back(j);
      return out;
    }
  }
  return {};
}

// ---- synthetic stream ------------------------------------------------------------------

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidConfig, msg); };
  if (eras < 1) fail("eras must be >= 1");
  if (rows_min < 5 || rows_max < rows_min) fail("need 5 <= rows_min <= rows_max");
  if (features < 1) fail("features must be >= 1");
  if (groups < 1 || groups > features) fail("groups must lie in [1, features]");
  if (targets < 1) fail("targets must be >= 1");
  if (informative_per_regime < 1 || informative_per_regime > features)
    fail("informative_per_regime must lie in [1, features]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be finite and >= 0");
  int previous = 1;
  for (int e : regime_switch_eras) {
    if (e <= previous || e > eras) fail("regime_switch_eras must be increasing within (1, eras]");
    previous = e;
  }
  double total = 0.0;
  for (double p : target_proportions) {
    if (!(p >= 0.0)) fail("target proportions must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) fail("target proportions must sum to 1");
}

std::array<std::size_t, 6> target_bin_cuts(std::size_t n, const std::array<double, 5>& proportions) {
  std::array<std::size_t, 6> cuts{};
  double cumulative = 0.0;
  for (std::size_t b = 0; b < 5; ++b) {
    cumulative += proportions[b];
    const auto cut = static_cast<std::size_t>(std::floor(cumulative * static_cast<double>(n) + 0.5));
    cuts[b + 1] = std::clamp(cut, cuts[b], n);
  }
  cuts[5] = n;
  return cuts;
}

SyntheticStream generate_synthetic_stream_detailed(const SynthConfig& cfg) {
  cfg.validate();
  const auto m = static_cast<std::size_t>(cfg.features);
  const auto k_targets = static_cast<std::size_t>(cfg.targets);
  const std::size_t regimes = cfg.regime_switch_eras.size() + 1;

  SyntheticStream stream;
  auto& data = stream.data;
  for (std::size_t j = 0; j < m; ++j) {
    char name[32];
    std::snprintf(name, sizeof name, "feature_%03zu", j);
    data.feature_names.emplace_back(name);
  }
  for (std::size_t k = 0; k < k_targets; ++k) data.target_names.push_back("target_" + std::to_string(k));
  const auto g = static_cast<std::size_t>(cfg.groups);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t group = j * g / m;
    const std::string name = group < kGroupNames.size() ? kGroupNames[group] : "group_" + std::to_string(group);
    data.feature_groups[name].push_back(j);
  }

  // weights[regime][target][feature]
  std::vector<std::vector<std::vector<double>>> weights(regimes);
  for (std::size_t r = 0; r < regimes; ++r) {
    std::vector<double> base(m, 0.0);
    if (r > 0 && cfg.regime_mode == RegimeMode::Flip) {
      for (std::size_t j = 0; j < m; ++j) base[j] = -weights[r - 1][0][j];
    } else {
      Rng rng(derive_seed(cfg.seed, stable_hash("regime") + r));
      for (auto j : rng.sample_without_replacement(m, static_cast<std::size_t>(cfg.informative_per_regime))) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        base[j] = sign * (0.5 + rng.uniform());
      }
    }
    weights[r].push_back(base);
    for (std::size_t k = 1; k < k_targets; ++k) {
      if (r > 0 && cfg.regime_mode == RegimeMode::Flip) {
        std::vector<double> flipped(m);
        for (std::size_t j = 0; j < m; ++j) flipped[j] = -weights[r - 1][k][j];
        weights[r].push_back(flipped);
        continue;
      }
      // auxiliary targets share the support and perturb the loadings
      Rng rng(derive_seed(cfg.seed, stable_hash("aux-target") + 1000 * r + k));
      std::vector<double> aux(m, 0.0);
      for (std::size_t j = 0; j < m; ++j)
        if (base[j] != 0.0) aux[j] = base[j] + 0.5 * rng.normal();
      weights[r].push_back(aux);
    }
  }
  for (const auto& w : weights) stream.regime_weights.push_back(w[0]);

  std::vector<double> norms;
  for (const auto& per_regime : weights)
    for (const auto& w : per_regime) {
      double ss = 0.0;
      for (double v : w) ss += v * v;
      norms.push_back(ss > 0.0 ? std::sqrt(2.0 * ss) : 1.0);
    }

  for (int era = 1; era <= cfg.eras; ++era) {
    std::size_t regime = 0;
    while (regime < cfg.regime_switch_eras.size() && era >= cfg.regime_switch_eras[regime]) ++regime;

    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(era)));
    const auto n = static_cast<std::size_t>(cfg.rows_min) +
                   static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(cfg.rows_max - cfg.rows_min + 1)));
    EraBlock block;
    block.era = era;
    block.features = FeatureMatrix(n, m);
    block.targets = TargetMatrix(n, k_targets);
    for (std::size_t i = 0; i < n; ++i) {
      block.row_ids.push_back("e" + std::to_string(era) + "r" + std::to_string(i));
      for (std::size_t j = 0; j < m; ++j)
        block.features(i, j) = static_cast<std::int8_t>(static_cast<int>(rng.below(5)) - 2);
    }
    Matrix<double> latent(n, k_targets);
    const auto cuts = target_bin_cuts(n, cfg.target_proportions);
    for (std::size_t k = 0; k < k_targets; ++k) {
      const auto& w = weights[regime][k];
      const double norm = norms[regime * k_targets + k];
      std::vector<double> s(n);
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < m; ++j) dot += w[j] * block.features(i, j);
        s[i] = dot / norm + cfg.noise_sigma * rng.normal();
        latent(i, k) = s[i];
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
      for (std::size_t b = 0; b < 5; ++b)
        for (std::size_t pos = cuts[b]; pos < cuts[b + 1]; ++pos) block.targets(order[pos], k) = kTargetBins[b];
    }
    stream.latent.emplace(era, std::move(latent));
    data.eras.push_back(std::move(block));
  }
  data.validate();
  return stream;
}

TemporalTabularDataset generate_synthetic_stream(const SynthConfig& cfg) {
  return generate_synthetic_stream_detailed(cfg).data;
}

}  // namespace dil::dataset
