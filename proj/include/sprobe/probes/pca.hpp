#pragma once

#include <Eigen/Eigenvalues>

#include "sprobe/probes/logreg.hpp"

namespace sprobe {

/// Principal axes of centred data, largest variance first. Each axis is signed so that
/// its largest-magnitude entry is positive.
struct PcaProjection {
  Vector mean;
  Matrix components;  // d x m, orthonormal columns
  Vector variances;   // m eigenvalues of the sample covariance

  static PcaProjection fit(const Matrix& x, std::size_t n_components) {
    if (n_components < 1 || n_components > static_cast<std::size_t>(x.cols()))
      throw InvalidArgument("PCA: n_components out of range");
    if (x.rows() < 2) throw InvalidArgument("PCA: need at least two rows");
    PcaProjection p;
    p.mean = x.colwise().mean().transpose();
    const Matrix centred = x.rowwise() - p.mean.transpose();
    const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("PCA: eigendecomposition failed");
    const auto d = x.cols();
    const auto m = static_cast<Eigen::Index>(n_components);
    p.components.resize(d, m);
    p.variances.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      Vector v = eig.eigenvectors().col(d - 1 - k);  // ascending order from Eigen
      Eigen::Index arg;
      v.cwiseAbs().maxCoeff(&arg);
      if (v[arg] < 0) v = -v;
      p.components.col(k) = v;
      p.variances[k] = std::max(0.0, eig.eigenvalues()[d - 1 - k]);
    }
    return p;
  }

  Matrix transform(const Matrix& x) const {
    if (x.cols() != mean.size()) throw DimensionMismatch("PCA: feature width differs from fit");
    return (x.rowwise() - mean.transpose()) * components;
  }
};

/// PCA to `n_components` on standardised features, then unregularised logistic regression.
struct PcaRegModel {
  Standardizer standardizer;
  PcaProjection pca;
  LogRegModel head;  // fit on projected features, no further standardisation

  Vector decision(const Matrix& x) const { return head.decision(pca.transform(standardizer.apply(x))); }
};

/// Cap on components for a data set: min(samples, features, 100).
inline std::size_t pca_component_cap(std::size_t n_samples, std::size_t n_features) {
  return std::min({n_samples, n_features, std::size_t{100}});
}

inline PcaRegModel train_pca_reg(const Matrix& x, const Labels& y, std::size_t n_components) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DimensionMismatch("pca_reg: rows != targets");
  require_both_classes(y, "pca_reg");
  const auto cap = pca_component_cap(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols()));
  if (n_components < 1 || n_components > cap)
    throw InvalidArgument("pca_reg: n_components " + std::to_string(n_components) + " outside [1, " + std::to_string(cap) + "]");
  PcaRegModel m;
  m.standardizer = Standardizer::fit(x);
  m.pca = PcaProjection::fit(m.standardizer.apply(x), n_components);
  LogRegOptions opt;
  opt.standardize = false;
  m.head = train_logreg(m.pca.transform(m.standardizer.apply(x)), y, Penalty::L2,
                        std::numeric_limits<double>::infinity(), opt);
  return m;
}

}  // namespace sprobe
