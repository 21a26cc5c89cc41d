#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "sprobe/common.hpp"

namespace sprobe {

struct GbtParams {
  std::size_t n_estimators = 100;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  double subsample = 1.0;
  double colsample_bytree = 1.0;
  double reg_alpha = 0.0;
  double reg_lambda = 1.0;
  double min_child_weight = 1.0;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, learning rate already applied
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const double* row) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = row[n.feature] < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
};

/// Gradient-boosted trees on logistic loss; score is the raw margin.
struct GbtModel {
  double base_score = 0.0;
  std::vector<RegressionTree> trees;
  std::size_t n_features = 0;
  GbtParams params;
  std::vector<double> train_loss;  // mean training logloss after each round

  Vector decision(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != n_features) throw DimensionMismatch("gbt: feature width differs from training");
    Vector out = Vector::Constant(x.rows(), base_score);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double* row = x.data() + r * x.cols();
      for (const auto& t : trees) out[r] += t.predict(row);
    }
    return out;
  }
};

namespace detail {

// Soft-thresholded gradient sum for the L1 term.
inline double l1_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

inline double leaf_score(double g, double h, const GbtParams& p) {
  const double t = l1_threshold(g, p.reg_alpha);
  return t * t / (h + p.reg_lambda);
}

inline double leaf_weight(double g, double h, const GbtParams& p) {
  return -l1_threshold(g, p.reg_alpha) / (h + p.reg_lambda);
}

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Grows one tree level by level with exact split enumeration over presorted columns.
inline RegressionTree grow_tree(const Matrix& x, const std::vector<std::vector<std::size_t>>& sorted_cols,
                                const Vector& grad, const Vector& hess, const std::vector<char>& row_in,
                                const std::vector<int>& features, const GbtParams& p) {
  const auto n = static_cast<std::size_t>(x.rows());
  RegressionTree tree;
  tree.nodes.emplace_back();
  std::vector<int> node_of(n, -1);
  std::vector<double> G(1, 0.0), H(1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (row_in[i]) {
      node_of[i] = 0;
      G[0] += grad[static_cast<Eigen::Index>(i)];
      H[0] += hess[static_cast<Eigen::Index>(i)];
    }
  std::vector<int> frontier{0};
  for (std::size_t depth = 0; depth < p.max_depth && !frontier.empty(); ++depth) {
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
    std::vector<SplitCandidate> best(frontier.size());
    for (int f : features) {
      std::vector<double> gl(frontier.size(), 0.0), hl(frontier.size(), 0.0), last(frontier.size(), 0.0);
      std::vector<char> any(frontier.size(), 0);
      for (auto i : sorted_cols[static_cast<std::size_t>(f)]) {
        const int node = node_of[i];
        if (node < 0 || slot[static_cast<std::size_t>(node)] < 0) continue;
        const auto s = static_cast<std::size_t>(slot[static_cast<std::size_t>(node)]);
        const double v = x(static_cast<Eigen::Index>(i), f);
        if (any[s] && v != last[s]) {
          const double gr = G[static_cast<std::size_t>(node)] - gl[s], hr = H[static_cast<std::size_t>(node)] - hl[s];
          if (hl[s] >= p.min_child_weight && hr >= p.min_child_weight) {
            const double gain = 0.5 * (leaf_score(gl[s], hl[s], p) + leaf_score(gr, hr, p) -
                                       leaf_score(G[static_cast<std::size_t>(node)], H[static_cast<std::size_t>(node)], p));
            if (gain > best[s].gain + 1e-12) best[s] = {gain, f, 0.5 * (last[s] + v)};
          }
        }
        gl[s] += grad[static_cast<Eigen::Index>(i)];
        hl[s] += hess[static_cast<Eigen::Index>(i)];
        last[s] = v;
        any[s] = 1;
      }
    }
    std::vector<int> next;
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      if (best[s].feature < 0) continue;
      const int id = frontier[s];
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      G.resize(tree.nodes.size(), 0.0);
      H.resize(tree.nodes.size(), 0.0);
      auto& node = tree.nodes[static_cast<std::size_t>(id)];
      node.feature = best[s].feature;
      node.threshold = best[s].threshold;
      node.left = left;
      node.right = left + 1;
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int id = node_of[i];
      if (id < 0) continue;
      const auto& node = tree.nodes[static_cast<std::size_t>(id)];
      if (node.feature < 0) continue;
      const int child = x(static_cast<Eigen::Index>(i), node.feature) < node.threshold ? node.left : node.right;
      node_of[i] = child;
      G[static_cast<std::size_t>(child)] += grad[static_cast<Eigen::Index>(i)];
      H[static_cast<std::size_t>(child)] += hess[static_cast<Eigen::Index>(i)];
    }
    frontier = std::move(next);
  }
  for (std::size_t id = 0; id < tree.nodes.size(); ++id)
    if (tree.nodes[id].feature < 0) tree.nodes[id].value = p.learning_rate * leaf_weight(G[id], H[id], p);
  return tree;
}

}  // namespace detail

/// Second-order boosting on logistic loss: each round fits a depth-limited tree to
/// gradient/hessian statistics (exact splits, leaf = -T_alpha(G) / (H + lambda)),
/// with per-round row subsampling and per-tree column subsampling. Raw features.
inline GbtModel train_gbt(const Matrix& x, const Labels& y, const GbtParams& p) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DimensionMismatch("gbt: rows != targets");
  require_both_classes(y, "gbt");
  if (p.max_depth < 1) throw InvalidArgument("gbt: max_depth must be >= 1");
  if (!(p.subsample > 0 && p.subsample <= 1) || !(p.colsample_bytree > 0 && p.colsample_bytree <= 1))
    throw InvalidArgument("gbt: subsample fractions must lie in (0, 1]");
  if (p.learning_rate < 0 || p.reg_alpha < 0 || p.reg_lambda < 0 || p.min_child_weight < 0)
    throw InvalidArgument("gbt: negative regularisation or learning rate");
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());

  GbtModel m;
  m.params = p;
  m.n_features = d;
  std::vector<std::vector<std::size_t>> sorted(d, std::vector<std::size_t>(n));
  for (std::size_t f = 0; f < d; ++f) {
    std::iota(sorted[f].begin(), sorted[f].end(), std::size_t{0});
    std::stable_sort(sorted[f].begin(), sorted[f].end(), [&](std::size_t a, std::size_t b) {
      return x(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(f)) < x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f));
    });
  }
  Rng rng(p.seed);
  Vector margin = Vector::Constant(x.rows(), m.base_score);
  Vector grad(x.rows()), hess(x.rows());
  const auto n_rows = std::max<std::size_t>(1, static_cast<std::size_t>(p.subsample * static_cast<double>(n)));
  const auto n_cols = std::max<std::size_t>(1, static_cast<std::size_t>(p.colsample_bytree * static_cast<double>(d)));
  for (std::size_t round = 0; round < p.n_estimators; ++round) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double prob = sigmoid(margin[i]);
      grad[i] = prob - y[static_cast<std::size_t>(i)];
      hess[i] = std::max(prob * (1 - prob), 1e-16);
    }
    std::vector<char> row_in(n, 1);
    if (n_rows < n) {
      std::fill(row_in.begin(), row_in.end(), 0);
      const Indices perm = permutation(n, rng);
      for (std::size_t k = 0; k < n_rows; ++k) row_in[perm[k]] = 1;
    }
    std::vector<int> features;
    {
      Indices perm = permutation(d, rng);
      perm.resize(n_cols);
      std::sort(perm.begin(), perm.end());
      for (auto f : perm) features.push_back(static_cast<int>(f));
    }
    RegressionTree tree = detail::grow_tree(x, sorted, grad, hess, row_in, features, p);
    for (Eigen::Index i = 0; i < x.rows(); ++i) margin[i] += tree.predict(x.data() + i * x.cols());
    m.trees.push_back(std::move(tree));
    m.train_loss.push_back(mean_logloss(margin, y));
  }
  return m;
}

}  // namespace sprobe
