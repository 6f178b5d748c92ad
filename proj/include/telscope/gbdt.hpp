#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "telscope/features.hpp"

namespace telscope {

/// A node of a regression tree. Internal nodes have `left >= 0`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
  int left = -1;
  int right = -1;
  /// Leaf output, already scaled by the learning rate.
  double weight = 0.0;
  /// Sum of training hessians reaching the node (row count under squared loss).
  double cover = 0.0;
  /// Split gain chosen during training; NaN for leaves and for loaded models.
  double gain = std::numeric_limits<double>::quiet_NaN();

  bool is_leaf() const { return left < 0; }
};

/// Nodes in creation order; index 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  /// Index of the leaf `x` lands in. Go left iff x[f] < threshold; NaN follows default_left.
  int leaf_for(std::span<const double> x) const;
  double predict(std::span<const double> x) const { return nodes[static_cast<std::size_t>(leaf_for(x))].weight; }
  int depth() const;
};

class TreeEnsemble {
 public:
  TreeEnsemble() = default;
  TreeEnsemble(double base_score, double eta, std::vector<std::string> feature_names, std::vector<Tree> trees);

  double base_score() const { return base_score_; }
  double eta() const { return eta_; }
  std::span<const std::string> feature_names() const { return feature_names_; }
  std::size_t feature_count() const { return feature_names_.size(); }
  std::span<const Tree> trees() const { return trees_; }

  double predict_row(std::span<const double> x) const;
  /// Throws SchemaError on feature-count mismatch.
  std::vector<double> predict(const FeatureMatrix& rows) const;

  /// The first `n` trees with the same base score.
  TreeEnsemble prefix(std::size_t n) const;

 private:
  double base_score_ = 0.0;
  double eta_ = 1.0;
  std::vector<std::string> feature_names_;
  std::vector<Tree> trees_;
};

struct TrainConfig {
  int rounds = 100;
  int max_depth = 6;
  double eta = 0.3;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Squared-error boosting with exact greedy splits. Requires `features.target`.
TreeEnsemble train(const FeatureMatrix& features, const TrainConfig& config);

/// ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ
double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda, double gamma);

void save_model(std::ostream& out, const TreeEnsemble& model);
/// Throws ModelFormatError on malformed or truncated input.
TreeEnsemble load_model(std::istream& in);

}  // namespace telscope
