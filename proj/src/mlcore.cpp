#include "slimseiz/mlcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <lapacke.h>

#include "slimseiz/errors.hpp"
#include "slimseiz/rng.hpp"

namespace slimseiz {

namespace {

// Full symmetric eigendecomposition, eigenvalues descending.
void eigh_descending(const Eigen::MatrixXd& sym, Eigen::VectorXd& values,
                     Eigen::MatrixXd& vectors) {
  const int d = static_cast<int>(sym.rows());
  Eigen::MatrixXd a = sym;  // column-major, overwritten with eigenvectors
  values.resize(d);
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', d, a.data(), d, values.data());
  if (info != 0) throw Error("symmetric eigendecomposition failed");
  // LAPACK returns ascending order.
  values.reverseInPlace();
  vectors = a.rowwise().reverse();
}

void apply_sign_convention(Eigen::MatrixXd& components) {
  for (Eigen::Index r = 0; r < components.rows(); ++r) {
    Eigen::Index imax = 0;
    components.row(r).cwiseAbs().maxCoeff(&imax);
    if (components(r, imax) < 0.0) components.row(r) = -components.row(r);
  }
}

PcaModel pca_fit_impl(const Eigen::MatrixXd& X, Eigen::VectorXd& all_values,
                      Eigen::MatrixXd& all_components) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 2) throw DegenerateInput("PCA needs at least 2 rows");

  PcaModel model;
  model.mean = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - model.mean.transpose();
  model.total_variance = centered.squaredNorm() / static_cast<double>(n - 1);
  if (model.total_variance <= 0.0)
    throw DegenerateInput("PCA input has zero variance in every feature");

  if (d <= n - 1) {
    const Eigen::MatrixXd cov =
        (centered.transpose() * centered) / static_cast<double>(n - 1);
    eigh_descending(cov, all_values, all_components);
    all_components.transposeInPlace();  // rows are components
  } else {
    // Gram form: eigenvectors u of centered*centered^T map to covariance
    // eigenvectors X^T u / sqrt(mu); at most n-1 non-null directions exist.
    const Eigen::MatrixXd gram = centered * centered.transpose();
    Eigen::VectorXd gram_values;
    Eigen::MatrixXd gram_vectors;
    eigh_descending(gram, gram_values, gram_vectors);
    const Eigen::Index rank = n - 1;
    all_values.resize(rank);
    all_components.resize(rank, d);
    for (Eigen::Index i = 0; i < rank; ++i) {
      const double mu = std::max(gram_values(i), 0.0);
      all_values(i) = mu / static_cast<double>(n - 1);
      if (mu > 1e-12 * std::abs(gram_values(0))) {
        all_components.row(i) =
            (centered.transpose() * gram_vectors.col(i)).transpose() / std::sqrt(mu);
      } else {
        all_components.row(i).setZero();  // null direction, variance ~ 0
      }
    }
  }
  for (Eigen::Index i = 0; i < all_values.size(); ++i)
    all_values(i) = std::max(all_values(i), 0.0);
  return model;
}

double gini(std::int64_t c0, std::int64_t c1) {
  const double n = static_cast<double>(c0 + c1);
  if (n <= 0.0) return 0.0;
  const double p0 = static_cast<double>(c0) / n;
  const double p1 = static_cast<double>(c1) / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

struct SplitChoice {
  bool found{false};
  int feature{-1};
  double threshold{0.0};
  double decrease{-1.0};
};

SplitChoice best_split(const Eigen::MatrixXd& X, std::span<const int> y,
                       const std::vector<int>& rows, int min_leaf) {
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  std::int64_t total1 = 0;
  for (int r : rows) total1 += y[static_cast<std::size_t>(r)];
  const std::int64_t total0 = n - total1;
  const double parent_gini = gini(total0, total1);

  SplitChoice best;
  std::vector<std::pair<double, int>> order(rows.size());
  for (int f = 0; f < X.cols(); ++f) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      order[i] = {X(rows[i], f), y[static_cast<std::size_t>(rows[i])]};
    std::sort(order.begin(), order.end());
    std::int64_t left1 = 0;
    for (std::int64_t i = 1; i < n; ++i) {
      left1 += order[static_cast<std::size_t>(i - 1)].second;
      const double prev = order[static_cast<std::size_t>(i - 1)].first;
      const double cur = order[static_cast<std::size_t>(i)].first;
      if (cur <= prev) continue;  // only between distinct adjacent values
      if (i < min_leaf || n - i < min_leaf) continue;
      const std::int64_t left0 = i - left1;
      const double child =
          (static_cast<double>(i) * gini(left0, left1) +
           static_cast<double>(n - i) * gini(total0 - left0, total1 - left1)) /
          static_cast<double>(n);
      // Impure nodes split at the best candidate even when the decrease is
      // zero (the children may still become separable); equal decreases keep
      // the earlier (lower feature, lower threshold) candidate because
      // iteration order is feature-major, value-ascending.
      const double decrease = parent_gini - child;
      const double threshold = prev + 0.5 * (cur - prev);
      if (decrease > best.decrease + 1e-15)
        best = {true, f, threshold, decrease};
    }
  }
  return best;
}

int grow_tree(const Eigen::MatrixXd& X, std::span<const int> y,
              const std::vector<int>& rows, int depth, const TreeConfig& cfg,
              std::vector<TreeNode>& nodes) {
  TreeNode node;
  std::int64_t c1 = 0;
  for (int r : rows) c1 += y[static_cast<std::size_t>(r)];
  const std::int64_t c0 = static_cast<std::int64_t>(rows.size()) - c1;
  node.class_counts = {c0, c1};
  node.predicted = c1 > c0 ? 1 : 0;  // tie -> class 0

  const bool pure = c0 == 0 || c1 == 0;
  SplitChoice split;
  if (!pure && depth < cfg.max_depth)
    split = best_split(X, y, rows, cfg.min_leaf);

  const int index = static_cast<int>(nodes.size());
  nodes.push_back(node);
  if (!split.found) return index;

  std::vector<int> left_rows, right_rows;
  for (int r : rows) {
    if (X(r, split.feature) <= split.threshold)
      left_rows.push_back(r);
    else
      right_rows.push_back(r);
  }
  const int left = grow_tree(X, y, left_rows, depth + 1, cfg, nodes);
  const int right = grow_tree(X, y, right_rows, depth + 1, cfg, nodes);
  nodes[static_cast<std::size_t>(index)].is_leaf = false;
  nodes[static_cast<std::size_t>(index)].feature = split.feature;
  nodes[static_cast<std::size_t>(index)].threshold = split.threshold;
  nodes[static_cast<std::size_t>(index)].left = left;
  nodes[static_cast<std::size_t>(index)].right = right;
  return index;
}

}  // namespace

PcaModel pca_fit(const Eigen::MatrixXd& X, int n_components) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n_components < 1 ||
      n_components > std::min<Eigen::Index>(n - 1, d))
    throw Error("n_components must lie in [1, min(n-1, d)]");
  Eigen::VectorXd values;
  Eigen::MatrixXd components;
  PcaModel model = pca_fit_impl(X, values, components);
  model.explained_variance = values.head(n_components);
  model.components = components.topRows(n_components);
  apply_sign_convention(model.components);
  return model;
}

PcaModel pca_fit_auto(const Eigen::MatrixXd& X, double variance_target,
                      int max_components) {
  if (max_components < 1) throw Error("max_components must be at least 1");
  Eigen::VectorXd values;
  Eigen::MatrixXd components;
  PcaModel model = pca_fit_impl(X, values, components);
  const int cap = std::min<int>(
      {max_components, static_cast<int>(values.size()), static_cast<int>(X.cols())});
  int keep = 1;
  double cum = values(0);
  while (keep < cap && cum < variance_target * model.total_variance &&
         values(keep) > 1e-12 * values(0)) {
    cum += values(keep);
    ++keep;
  }
  model.explained_variance = values.head(keep);
  model.components = components.topRows(keep);
  apply_sign_convention(model.components);
  return model;
}

Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.mean.size())
    throw ShapeMismatch("pca_transform: feature count mismatch");
  return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Eigen::MatrixXd smote(const Eigen::MatrixXd& X_min, int n_synthetic,
                      int k_neighbors, std::uint64_t seed) {
  const Eigen::Index n = X_min.rows();
  if (n < 2) throw TooFewMinority("SMOTE needs at least 2 minority rows");
  if (k_neighbors < 1) throw Error("SMOTE needs k_neighbors >= 1");
  if (n_synthetic < 0) throw Error("SMOTE synthetic count must be non-negative");
  const int k = static_cast<int>(
      std::min<Eigen::Index>(k_neighbors, n - 1));

  // Brute-force k nearest neighbors; ties broken by row index for
  // reproducibility.
  std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      dist[static_cast<std::size_t>(j)] = {
          (X_min.row(i) - X_min.row(j)).squaredNorm(), static_cast<int>(j)};
    dist[static_cast<std::size_t>(i)].first =
        std::numeric_limits<double>::infinity();  // exclude self
    std::sort(dist.begin(), dist.end());
    auto& nb = neighbors[static_cast<std::size_t>(i)];
    nb.reserve(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) nb.push_back(dist[static_cast<std::size_t>(t)].second);
  }

  Rng rng(seed);
  Eigen::MatrixXd out(n_synthetic, X_min.cols());
  for (int s = 0; s < n_synthetic; ++s) {
    const Eigen::Index i = static_cast<Eigen::Index>(s) % n;  // round-robin base
    const auto& nb = neighbors[static_cast<std::size_t>(i)];
    const int j = nb[static_cast<std::size_t>(rng.uniform_int(nb.size()))];
    const double u = rng.uniform();
    out.row(s) = X_min.row(i) + u * (X_min.row(j) - X_min.row(i));
  }
  return out;
}

DecisionTree tree_fit(const Eigen::MatrixXd& X, std::span<const int> y,
                      TreeConfig config) {
  if (X.rows() < 1) throw Error("tree_fit needs at least one row");
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw LengthMismatch("tree_fit: row/label count mismatch");
  for (int label : y)
    if (label != 0 && label != 1) throw Error("tree_fit: labels must be binary");
  DecisionTree tree;
  tree.num_features = static_cast<int>(X.cols());
  tree.config = config;
  std::vector<int> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  grow_tree(X, y, rows, 0, config, tree.nodes);
  return tree;
}

std::vector<int> tree_predict(const DecisionTree& tree, const Eigen::MatrixXd& X) {
  if (X.cols() != tree.num_features)
    throw ShapeMismatch("tree_predict: feature count mismatch");
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    int idx = 0;
    while (!tree.nodes[static_cast<std::size_t>(idx)].is_leaf) {
      const TreeNode& nd = tree.nodes[static_cast<std::size_t>(idx)];
      idx = X(r, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    out[static_cast<std::size_t>(r)] = tree.nodes[static_cast<std::size_t>(idx)].predicted;
  }
  return out;
}

MetricsReport compute_metrics(std::span<const int> predicted,
                              std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw LengthMismatch("compute_metrics: length mismatch");
  if (predicted.empty()) throw LengthMismatch("compute_metrics: empty input");
  MetricsReport m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pos = truth[i] == 1;
    const bool hit = predicted[i] == truth[i];
    if (pos)
      hit ? ++m.tp : ++m.fn;
    else
      hit ? ++m.tn : ++m.fp;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.accuracy = static_cast<double>(m.tp + m.tn) /
               static_cast<double>(m.tp + m.tn + m.fp + m.fn);
  if (m.tp + m.fn > 0) {
    m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  } else {
    m.sensitivity = nan;
    m.sensitivity_defined = false;
  }
  if (m.tn + m.fp > 0) {
    m.specificity = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
  } else {
    m.specificity = nan;
    m.specificity_defined = false;
  }
  return m;
}

}  // namespace slimseiz
