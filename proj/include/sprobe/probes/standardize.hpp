#pragma once

#include "sprobe/common.hpp"

namespace sprobe {

/// Per-feature z-scoring with statistics frozen at fit time. Constant features keep
/// scale 1 so they map to zero.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer identity(Eigen::Index d) { return {Vector::Zero(d), Vector::Ones(d)}; }

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    const double n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double var = (x.col(c).array() - s.mean[c]).square().sum() / n;
      const double sd = std::sqrt(var);
      s.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  Eigen::Index dim() const { return mean.size(); }

  Matrix apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw DimensionMismatch("feature width differs from training");
    return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
  }
};

}  // namespace sprobe
