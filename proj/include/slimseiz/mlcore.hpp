#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace slimseiz {

struct PcaModel {
  Eigen::VectorXd mean;                // [d]
  Eigen::MatrixXd components;          // [n_components x d], rows orthonormal
  Eigen::VectorXd explained_variance;  // [n_components], non-increasing
  double total_variance{0.0};          // trace of the sample covariance

  int n_components() const { return static_cast<int>(components.rows()); }
};

// Top principal components of the sample covariance of mean-centered X.
// Uses the d x d covariance eigendecomposition when d <= n-1 and the n x n
// Gram-matrix form otherwise (identical results, picked for cost). Sign
// convention: the largest-magnitude entry of each component is positive.
// Requires n >= 2 and 1 <= n_components <= min(n-1, d); throws
// DegenerateInput when X has zero variance everywhere.
PcaModel pca_fit(const Eigen::MatrixXd& X, int n_components);

// pca_fit with the component count chosen as the smallest one whose
// cumulative explained variance reaches variance_target, capped at
// max_components.
PcaModel pca_fit_auto(const Eigen::MatrixXd& X, double variance_target,
                      int max_components);

// (X - mean) * components^T. Throws ShapeMismatch on a column-count mismatch.
Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& X);

// Synthetic minority oversampling: row j of the result is
// x_i + u * (x_nb - x_i), where i cycles round-robin over the minority rows,
// x_nb is drawn uniformly from x_i's k nearest neighbors (Euclidean), and
// u ~ Uniform[0,1). Deterministic under seed. The effective neighbor count is
// min(k_neighbors, n_min - 1). Throws TooFewMinority when n_min < 2.
Eigen::MatrixXd smote(const Eigen::MatrixXd& X_min, int n_synthetic,
                      int k_neighbors, std::uint64_t seed);

struct TreeConfig {
  int max_depth{10};
  int min_leaf{5};
};

// CART node; children refer to positions in DecisionTree::nodes.
struct TreeNode {
  bool is_leaf{true};
  int feature{-1};
  double threshold{0.0};
  int left{-1};
  int right{-1};
  int predicted{0};
  std::array<std::int64_t, 2> class_counts{0, 0};
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int num_features{0};
  TreeConfig config;
};

// Greedy CART on binary labels: the best split maximizes Gini impurity
// decrease over all (feature, midpoint-between-adjacent-distinct-values)
// candidates, both children must keep at least min_leaf rows, ties prefer the
// lower feature index and then the lower threshold. Leaves predict the
// majority class (tie -> class 0).
DecisionTree tree_fit(const Eigen::MatrixXd& X, std::span<const int> y,
                      TreeConfig config);

// Root-to-leaf descent; x[feature] <= threshold goes left.
std::vector<int> tree_predict(const DecisionTree& tree, const Eigen::MatrixXd& X);

struct MetricsReport {
  std::int64_t tp{0}, fp{0}, tn{0}, fn{0};
  double accuracy{0.0};
  double sensitivity{0.0};
  double specificity{0.0};
  bool sensitivity_defined{true};  // false -> sensitivity is NaN (no positives)
  bool specificity_defined{true};  // false -> specificity is NaN (no negatives)
};

// Binary metrics with label 1 as the positive class. Undefined ratios are
// reported as NaN with the matching flag cleared. Throws LengthMismatch.
MetricsReport compute_metrics(std::span<const int> predicted,
                              std::span<const int> truth);

}  // namespace slimseiz
