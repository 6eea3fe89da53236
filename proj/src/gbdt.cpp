#include "dil/gbdt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "dil/rng.hpp"
#include "dil/stats.hpp"

namespace dil::gbdt {

namespace {

constexpr int kBins = 5;
constexpr int kBinOffset = 2;  // code = value + 2
constexpr const char* kModelMagic = "dil-gbdt";
constexpr int kModelVersion = 1;

std::size_t scaled_count(double fraction, std::size_t n) {
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  return std::clamp<std::size_t>(count, 1, n);
}

struct Split {
  std::int32_t feature = -1;  // position in the column store
  int threshold_code = 0;     // rows with code <= threshold_code go left
  double score = 0.0;         // sL^2/nL + sR^2/nR
};

struct Work {
  std::int32_t node = 0;
  int depth = 0;
  std::vector<std::uint32_t> rows;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<std::uint8_t>>& columns,
              const std::vector<std::size_t>& column_features, const Hyperparams& hp)
      : columns_(columns), column_features_(column_features), hp_(hp) {}

  RegressionTree build(const std::vector<double>& residual, std::vector<std::uint32_t> rows,
                       const std::vector<std::int32_t>& candidate_columns) {
    RegressionTree tree;
    tree.nodes.emplace_back();
    std::vector<Work> frontier;
    frontier.push_back({0, 0, std::move(rows)});
    while (!frontier.empty()) {
      std::vector<Work> next;
      for (auto& work : frontier) {
        const auto n = work.rows.size();
        double sum = 0.0;
        double sum_sq = 0.0;
        for (auto r : work.rows) {
          sum += residual[r];
          sum_sq += residual[r] * residual[r];
        }
        tree.nodes[work.node].value = sum / static_cast<double>(n);
        const auto min_leaf = static_cast<std::size_t>(hp_.min_samples_leaf);
        if (work.depth >= hp_.max_depth || n < 2 * min_leaf) continue;

        const Split best = find_split(residual, work.rows, candidate_columns, sum);
        if (best.feature < 0) continue;
        const double gain = best.score - sum * sum / static_cast<double>(n);
        if (!(gain > 1e-12 * sum_sq)) continue;

        const auto& column = columns_[static_cast<std::size_t>(best.feature)];
        std::vector<std::uint32_t> left_rows;
        std::vector<std::uint32_t> right_rows;
        for (auto r : work.rows) (column[r] <= best.threshold_code ? left_rows : right_rows).push_back(r);

        const auto left = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& node = tree.nodes[work.node];
        node.feature = static_cast<std::int32_t>(column_features_[static_cast<std::size_t>(best.feature)]);
        node.threshold = static_cast<std::int8_t>(best.threshold_code - kBinOffset);
        node.left = left;
        node.right = left + 1;
        next.push_back({left, work.depth + 1, std::move(left_rows)});
        next.push_back({left + 1, work.depth + 1, std::move(right_rows)});
      }
      frontier = std::move(next);
    }
    return tree;
  }

 private:
  // Candidates are scanned in ascending feature order and thresholds in ascending order;
  // only a strictly better score replaces the incumbent, which fixes the tie-break.
  Split find_split(const std::vector<double>& residual, const std::vector<std::uint32_t>& rows,
                   const std::vector<std::int32_t>& candidate_columns, double total) const {
    const auto n = rows.size();
    const auto min_leaf = static_cast<std::size_t>(hp_.min_samples_leaf);
    Split best;
    bool found = false;
    for (auto c : candidate_columns) {
      const auto& column = columns_[static_cast<std::size_t>(c)];
      std::array<double, kBins> sums{};
      std::array<std::size_t, kBins> counts{};
      for (auto r : rows) {
        sums[column[r]] += residual[r];
        ++counts[column[r]];
      }
      double left_sum = 0.0;
      std::size_t left_n = 0;
      for (int t = 0; t < kBins - 1; ++t) {
        left_sum += sums[t];
        left_n += counts[t];
        if (counts[t] == 0) continue;  // same partition as the previous threshold
        const std::size_t right_n = n - left_n;
        if (left_n < min_leaf || right_n < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(left_n) +
                             right_sum * right_sum / static_cast<double>(right_n);
        if (!found || score > best.score) {
          best = {c, t, score};
          found = true;
        }
      }
    }
    return best;
  }

  const std::vector<std::vector<std::uint8_t>>& columns_;
  const std::vector<std::size_t>& column_features_;
  const Hyperparams& hp_;
};

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size()) throw Error(Errc::MalformedFile, "bad number '" + token + "'");
  return v;
}

template <class T>
T parse_int(const std::string& token) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(token, &used);
    if (used != token.size()) throw Error(Errc::MalformedFile, "bad integer '" + token + "'");
    return static_cast<T>(v);
  } catch (const std::logic_error&) {
    throw Error(Errc::MalformedFile, "bad integer '" + token + "'");
  }
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}
  std::string next() {
    std::string token;
    if (!(in_ >> token)) throw Error(Errc::MalformedFile, "model file truncated");
    return token;
  }
  void expect(const std::string& keyword) {
    const auto token = next();
    if (token != keyword) throw Error(Errc::MalformedFile, "expected '" + keyword + "', got '" + token + "'");
  }
  double real() { return parse_double(next()); }
  template <class T>
  T integer() {
    return parse_int<T>(next());
  }

 private:
  std::istream& in_;
};

}  // namespace

double ansatz_learning_rate(int boosting_rounds) {
  if (boosting_rounds < 1) throw Error(Errc::InvalidArgument, "boosting rounds must be >= 1");
  return 50.0 / static_cast<double>(boosting_rounds);
}

void Hyperparams::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidConfig, "gbdt: " + msg); };
  if (boosting_rounds < 1) fail("boosting_rounds must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (max_depth < 1) fail("max_depth must be >= 1");
  if (min_samples_leaf < 1) fail("min_samples_leaf must be >= 1");
  if (!(row_subsample > 0.0 && row_subsample <= 1.0)) fail("row_subsample must lie in (0,1]");
  if (!(feature_subsample_per_tree > 0.0 && feature_subsample_per_tree <= 1.0))
    fail("feature_subsample_per_tree must lie in (0,1]");
}

Hyperparams ansatz_hyperparams(int boosting_rounds, std::uint64_t seed) {
  Hyperparams hp;
  hp.boosting_rounds = boosting_rounds;
  hp.learning_rate = ansatz_learning_rate(boosting_rounds);
  hp.max_depth = 4;
  hp.row_subsample = 0.75;
  hp.feature_subsample_per_tree = 0.75;
  hp.seed = seed;
  return hp;
}

double RegressionTree::evaluate(std::span<const std::int8_t> row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& node = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                : node.right);
  }
  return nodes[i].value;
}

int RegressionTree::depth() const {
  std::vector<int> depth(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) continue;
    depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
    depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    deepest = std::max(deepest, depth[i] + 1);
  }
  return deepest;
}

std::size_t RegressionTree::internal_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return !n.is_leaf(); }));
}

Model::Model(double base_prediction, Hyperparams hyperparams, std::size_t feature_count,
             std::vector<std::size_t> trained_features, std::vector<RegressionTree> trees)
    : base_(base_prediction),
      hp_(hyperparams),
      feature_count_(feature_count),
      trained_features_(std::move(trained_features)),
      trees_(std::move(trees)),
      importance_(feature_count, 0) {
  for (const auto& tree : trees_)
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const auto f = static_cast<std::size_t>(node.feature);
      if (f >= feature_count_) throw Error(Errc::MalformedFile, "tree splits on feature outside the universe");
      ++importance_[f];
    }
}

double Model::predict_row(std::span<const std::int8_t> row) const {
  double out = base_;
  for (const auto& tree : trees_) out += hp_.learning_rate * tree.evaluate(row);
  return out;
}

std::vector<double> Model::predict(const Matrix<std::int8_t>& features) const {
  if (features.cols() < feature_count_)
    throw Error(Errc::FeatureMismatch, "model expects " + std::to_string(feature_count_) + " columns, got " +
                                           std::to_string(features.cols()));
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = predict_row(features.row(i));
  return out;
}

Model fit(const Matrix<std::int8_t>& features, std::span<const double> target, const Hyperparams& hp,
          std::span<const std::size_t> feature_set) {
  hp.validate();
  const std::size_t n = features.rows();
  const std::size_t m = features.cols();
  if (target.size() != n) throw Error(Errc::DimensionMismatch, "fit: target length differs from row count");
  if (n <= static_cast<std::size_t>(hp.min_samples_leaf))
    throw Error(Errc::InsufficientRows, "fit: need more rows than min_samples_leaf");
  for (double v : target)
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "fit: non-finite target");

  std::vector<std::size_t> trained;
  if (feature_set.empty()) {
    trained.resize(m);
    std::iota(trained.begin(), trained.end(), std::size_t{0});
  } else {
    trained.assign(feature_set.begin(), feature_set.end());
    std::sort(trained.begin(), trained.end());
    trained.erase(std::unique(trained.begin(), trained.end()), trained.end());
    if (trained.back() >= m) throw Error(Errc::FeatureMismatch, "fit: feature index outside matrix");
  }

  std::vector<std::vector<std::uint8_t>> columns(trained.size(), std::vector<std::uint8_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = features.row(i);
    for (std::size_t c = 0; c < trained.size(); ++c) {
      const int v = row[trained[c]];
      if (v < -2 || v > 2) throw Error(Errc::FeatureMismatch, "fit: feature values must lie in -2..2");
      columns[c][i] = static_cast<std::uint8_t>(v + kBinOffset);
    }
  }

  const double base = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n);
  const bool constant = std::all_of(target.begin(), target.end(), [&](double v) { return v == target[0]; });
  if (constant) return Model(target[0], hp, m, std::move(trained), {});

  std::vector<double> prediction(n, base);
  std::vector<double> residual(n);
  std::vector<RegressionTree> trees;
  trees.reserve(static_cast<std::size_t>(hp.boosting_rounds));
  TreeBuilder builder(columns, trained, hp);

  std::vector<std::uint32_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0u);
  std::vector<std::int32_t> all_columns(trained.size());
  std::iota(all_columns.begin(), all_columns.end(), 0);
  const std::size_t row_count = scaled_count(hp.row_subsample, n);
  const std::size_t column_count = scaled_count(hp.feature_subsample_per_tree, trained.size());

  for (int round = 0; round < hp.boosting_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = target[i] - prediction[i];

    Rng rng(derive_seed(hp.seed, static_cast<std::uint64_t>(round)));
    std::vector<std::uint32_t> rows;
    if (row_count == n) {
      rows = all_rows;
    } else {
      for (auto r : rng.sample_without_replacement(n, row_count)) rows.push_back(static_cast<std::uint32_t>(r));
    }
    std::vector<std::int32_t> candidates;
    if (column_count == trained.size()) {
      candidates = all_columns;
    } else {
      for (auto c : rng.sample_without_replacement(trained.size(), column_count))
        candidates.push_back(static_cast<std::int32_t>(c));
    }

    auto tree = builder.build(residual, std::move(rows), candidates);
    for (std::size_t i = 0; i < n; ++i) prediction[i] += hp.learning_rate * tree.evaluate(features.row(i));
    trees.push_back(std::move(tree));
  }
  return Model(base, hp, m, std::move(trained), std::move(trees));
}

Model snapshot(const Model& model, std::size_t tree_count) {
  if (tree_count > model.trees().size())
    throw Error(Errc::OutOfRange, "snapshot of " + std::to_string(tree_count) + " trees from a model with " +
                                      std::to_string(model.trees().size()));
  std::vector<RegressionTree> prefix(model.trees().begin(),
                                     model.trees().begin() + static_cast<std::ptrdiff_t>(tree_count));
  return Model(model.base_prediction(), model.hyperparams(), model.feature_count(), model.trained_features(),
               std::move(prefix));
}

Similarity structural_similarity(std::span<const double> importance_a, std::span<const double> importance_b) {
  if (importance_a.size() != importance_b.size())
    throw Error(Errc::DimensionMismatch, "structural_similarity: feature universes differ");
  auto single_level = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  const bool degenerate_a = importance_a.empty() || single_level(importance_a);
  const bool degenerate_b = importance_b.empty() || single_level(importance_b);
  if (degenerate_a && degenerate_b)
    throw Error(Errc::DegenerateImportance, "both importance vectors have a single rank level");
  if (degenerate_a || degenerate_b) return {0.0, true};
  const auto ra = stats::percentile_rank(importance_a);
  const auto rb = stats::percentile_rank(importance_b);
  return {stats::pearson(ra, rb).value_or(0.0), false};
}

Similarity structural_similarity(const Model& a, const Model& b) {
  std::vector<double> ia(a.feature_importance().begin(), a.feature_importance().end());
  std::vector<double> ib(b.feature_importance().begin(), b.feature_importance().end());
  return structural_similarity(ia, ib);
}

void save_model(const Model& model, std::ostream& out) {
  const auto& hp = model.hyperparams();
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "features " << model.feature_count() << '\n';
  out << "base " << hex(model.base_prediction()) << '\n';
  out << "hyperparams " << hp.boosting_rounds << ' ' << hex(hp.learning_rate) << ' ' << hp.max_depth << ' '
      << hp.min_samples_leaf << ' ' << hex(hp.row_subsample) << ' ' << hex(hp.feature_subsample_per_tree) << ' '
      << hp.seed << '\n';
  out << "trained " << model.trained_features().size();
  for (auto f : model.trained_features()) out << ' ' << f;
  out << '\n';
  out << "trees " << model.trees().size() << '\n';
  for (const auto& tree : model.trees()) {
    out << "tree " << tree.nodes.size() << '\n';
    for (const auto& node : tree.nodes)
      out << node.feature << ' ' << static_cast<int>(node.threshold) << ' ' << node.left << ' ' << node.right << ' '
          << hex(node.value) << '\n';
  }
}

Model load_model(std::istream& in) {
  TokenReader reader(in);
  reader.expect(kModelMagic);
  if (reader.integer<int>() != kModelVersion) throw Error(Errc::MalformedFile, "unsupported model version");
  reader.expect("features");
  const auto feature_count = reader.integer<std::size_t>();
  reader.expect("base");
  const double base = reader.real();
  reader.expect("hyperparams");
  Hyperparams hp;
  hp.boosting_rounds = reader.integer<int>();
  hp.learning_rate = reader.real();
  hp.max_depth = reader.integer<int>();
  hp.min_samples_leaf = reader.integer<int>();
  hp.row_subsample = reader.real();
  hp.feature_subsample_per_tree = reader.real();
  hp.seed = static_cast<std::uint64_t>(std::stoull(reader.next()));
  reader.expect("trained");
  std::vector<std::size_t> trained(reader.integer<std::size_t>());
  for (auto& f : trained) f = reader.integer<std::size_t>();
  reader.expect("trees");
  std::vector<RegressionTree> trees(reader.integer<std::size_t>());
  for (auto& tree : trees) {
    reader.expect("tree");
    tree.nodes.resize(reader.integer<std::size_t>());
    for (auto& node : tree.nodes) {
      node.feature = reader.integer<std::int32_t>();
      node.threshold = reader.integer<std::int8_t>();
      node.left = reader.integer<std::int32_t>();
      node.right = reader.integer<std::int32_t>();
      node.value = reader.real();
      const auto limit = static_cast<std::int32_t>(tree.nodes.size());
      if (!node.is_leaf() && (node.left <= 0 || node.left >= limit || node.right <= 0 || node.right >= limit))
        throw Error(Errc::MalformedFile, "tree child index out of range");
    }
  }
  return Model(base, hp, feature_count, std::move(trained), std::move(trees));
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::MalformedFile, "cannot write " + path.string());
  save_model(model, out);
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MalformedFile, "cannot open " + path.string());
  return load_model(in);
}

}  // namespace dil::gbdt
