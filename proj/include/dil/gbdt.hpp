#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "dil/core.hpp"

namespace dil::gbdt {

/// Learning rate paired with a boosting budget B by the rule L = 50 / B.
double ansatz_learning_rate(int boosting_rounds);

struct Hyperparams {
  int boosting_rounds = 100;
  double learning_rate = 0.5;
  int max_depth = 4;
  int min_samples_leaf = 1;
  double row_subsample = 1.0;
  double feature_subsample_per_tree = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

/// Depth 4, 75% rows and 75% features per tree, learning rate 50/B.
Hyperparams ansatz_hyperparams(int boosting_rounds, std::uint64_t seed = 0);

/// Internal nodes send rows with x[feature] <= threshold to `left`.
struct Node {
  std::int32_t feature = -1;  // -1 marks a leaf
  std::int8_t threshold = 0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // leaf output

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const Node&) const = default;
};

struct RegressionTree {
  std::vector<Node> nodes;  // nodes[0] is the root

  double evaluate(std::span<const std::int8_t> row) const;
  int depth() const;
  std::size_t internal_count() const;
  bool operator==(const RegressionTree&) const = default;
};

/// Trained ensemble: prediction = base + learning_rate * sum of tree outputs.
class Model {
 public:
  Model() = default;
  Model(double base_prediction, Hyperparams hyperparams, std::size_t feature_count,
        std::vector<std::size_t> trained_features, std::vector<RegressionTree> trees);

  double base_prediction() const noexcept { return base_; }
  const Hyperparams& hyperparams() const noexcept { return hp_; }
  std::size_t feature_count() const noexcept { return feature_count_; }
  const std::vector<std::size_t>& trained_features() const noexcept { return trained_features_; }
  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
  /// Split counts per feature over all trees.
  const std::vector<std::size_t>& feature_importance() const noexcept { return importance_; }

  double predict_row(std::span<const std::int8_t> row) const;
  std::vector<double> predict(const Matrix<std::int8_t>& features) const;

  bool operator==(const Model&) const = default;

 private:
  double base_ = 0.0;
  Hyperparams hp_;
  std::size_t feature_count_ = 0;
  std::vector<std::size_t> trained_features_;
  std::vector<RegressionTree> trees_;
  std::vector<std::size_t> importance_;
};

/// Squared-loss gradient boosting with depth-wise trees and exact split enumeration over
/// the 5 feature bins. `feature_set` restricts the columns used (empty = all).
/// A constant target yields a model with no trees.
Model fit(const Matrix<std::int8_t>& features, std::span<const double> target, const Hyperparams& hp,
          std::span<const std::size_t> feature_set = {});

/// Model keeping only the first `tree_count` trees.
Model snapshot(const Model& model, std::size_t tree_count);

struct Similarity {
  double value = 0.0;
  bool degenerate = false;  // exactly one importance vector had a single rank level
};

/// Pearson correlation of percentile-ranked split-count importances.
Similarity structural_similarity(const Model& a, const Model& b);
Similarity structural_similarity(std::span<const double> importance_a, std::span<const double> importance_b);

void save_model(const Model& model, std::ostream& out);
Model load_model(std::istream& in);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace dil::gbdt
