#pragma once

#include <algorithm>
#include <numeric>

#include "sprobe/probes/standardize.hpp"

namespace sprobe {

/// k-nearest-neighbour scorer over the standardised training set. The score is the
/// fraction of positive labels among the k Euclidean neighbours; equal distances are
/// ordered by lower training index.
struct KnnModel {
  Standardizer standardizer;
  Matrix train;
  Labels labels;
  std::size_t k = 1;

  Indices neighbors_of_standardized(const Eigen::RowVectorXd& q) const {
    const auto n = static_cast<std::size_t>(train.rows());
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = (train.row(static_cast<Eigen::Index>(i)) - q).squaredNorm();
    Indices order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
    order.resize(k);
    return order;
  }

  Indices neighbors(const Eigen::RowVectorXd& x) const {
    return neighbors_of_standardized(standardizer.apply(x));
  }

  Vector decision(const Matrix& x) const {
    const Matrix z = standardizer.apply(x);
    Vector out(z.rows());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      std::size_t pos = 0;
      for (auto i : neighbors_of_standardized(z.row(r))) pos += labels[i] == 1;
      out[r] = static_cast<double>(pos) / static_cast<double>(k);
    }
    return out;
  }
};

inline KnnModel train_knn(const Matrix& x, const Labels& y, std::size_t n_neighbors) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DimensionMismatch("knn: rows != targets");
  require_both_classes(y, "knn");
  if (n_neighbors < 1 || n_neighbors > y.size()) throw InvalidArgument("knn: n_neighbors out of range");
  KnnModel m;
  m.standardizer = Standardizer::fit(x);
  m.train = m.standardizer.apply(x);
  m.labels = y;
  m.k = n_neighbors;
  return m;
}

}  // namespace sprobe
