#pragma once

#include <cmath>
#include <limits>

#include "sprobe/probes/standardize.hpp"

namespace sprobe {

enum class Penalty { L1, L2 };

inline const char* to_string(Penalty p) { return p == Penalty::L1 ? "l1" : "l2"; }

struct LogRegOptions {
  double tol = 1e-6;      // max parameter change per iteration
  int max_iter = 1000;    // Newton iterations (L2) or coordinate sweeps (L1)
  bool standardize = true;
};

/// Binary logistic regression; score = w . standardize(x) + b.
struct LogRegModel {
  Standardizer standardizer;
  Vector w;
  double b = 0.0;
  Penalty penalty = Penalty::L2;
  double c = 1.0;
  int iterations = 0;
  bool converged = false;

  Vector decision(const Matrix& x) const {
    const Matrix z = standardizer.apply(x);
    return (z * w).array() + b;
  }
  std::size_t nonzeros() const { return static_cast<std::size_t>((w.array() != 0.0).count()); }
};

/// Summed logistic loss plus (1/c) * penalty on w (bias unpenalised). c = +inf disables
/// the penalty.
inline double logreg_objective(const Matrix& z, const Labels& y, const Vector& w, double b, Penalty penalty, double c) {
  const Vector m = (z * w).array() + b;
  double loss = mean_logloss(m, y) * static_cast<double>(y.size());
  if (std::isfinite(c)) loss += (penalty == Penalty::L2 ? 0.5 * w.squaredNorm() : w.lpNorm<1>()) / c;
  return loss;
}

namespace detail {

inline double pointwise_loss(double margin, int y) { return y ? softplus(-margin) : softplus(margin); }

// Damped Newton on [w; b] with Armijo backtracking.
inline void fit_logreg_l2(const Matrix& z, const Labels& y, double lambda, const LogRegOptions& opt, LogRegModel& m) {
  const Eigen::Index n = z.rows(), d = z.cols();
  Matrix za(n, d + 1);
  za.leftCols(d) = z;
  za.col(d).setOnes();
  Vector theta = Vector::Zero(d + 1);
  Vector yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];
  auto objective = [&](const Vector& t) {
    return logreg_objective(z, y, t.head(d), t[d], Penalty::L2, lambda > 0 ? 1.0 / lambda : std::numeric_limits<double>::infinity());
  };
  double f = objective(theta);
  for (m.iterations = 0; m.iterations < opt.max_iter; ++m.iterations) {
    const Vector margin = za * theta;
    Vector p(n), wts(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(margin[i]);
      wts[i] = p[i] * (1 - p[i]);
    }
    Vector grad = za.transpose() * (p - yv);
    grad.head(d) += lambda * theta.head(d);
    Matrix hess = za.transpose() * wts.asDiagonal() * za;
    hess.diagonal().head(d).array() += lambda;
    hess.diagonal().array() += 1e-10 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
    const Vector step = hess.ldlt().solve(-grad);
    if (!step.allFinite()) break;
    double t = 1.0, f_new = f;
    const double slope = grad.dot(step);
    Vector cand = theta;
    for (int k = 0; k < 50; ++k, t *= 0.5) {
      cand = theta + t * step;
      f_new = objective(cand);
      if (f_new <= f + 1e-4 * t * slope) break;
    }
    if (!(f_new <= f)) {  // no descent possible at this precision
      m.converged = true;
      break;
    }
    const double change = (cand - theta).cwiseAbs().maxCoeff();
    const double rel_drop = (f - f_new) / std::max(1.0, std::abs(f));
    theta = cand;
    f = f_new;
    if (change < opt.tol || (lambda == 0 && rel_drop < 1e-14)) {
      m.converged = true;
      ++m.iterations;
      break;
    }
  }
  m.w = theta.head(d);
  m.b = theta[d];
}

// Cyclic coordinate descent with soft-thresholding. Each coordinate takes the proximal
// Newton step; if that does not decrease the objective it falls back to the step under
// the global curvature bound (1/4) * sum x^2, which always does.
inline void fit_logreg_l1(const Matrix& z, const Labels& y, double lambda, const LogRegOptions& opt, LogRegModel& m) {
  const Eigen::Index n = z.rows(), d = z.cols();
  Vector w = Vector::Zero(d);
  double b = 0.0;
  Vector margin = Vector::Zero(n);
  Vector col_sq(d);
  for (Eigen::Index j = 0; j < d; ++j) col_sq[j] = z.col(j).squaredNorm();

  auto soft = [](double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); };
  // Objective change from adding delta * column (or the bias when col < 0).
  auto delta_loss = [&](Eigen::Index col, double delta) {
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = col < 0 ? 1.0 : z(i, col);
      if (x == 0.0) continue;
      const int yi = y[static_cast<std::size_t>(i)];
      s += pointwise_loss(margin[i] + delta * x, yi) - pointwise_loss(margin[i], yi);
    }
    return s;
  };
  auto grad_hess = [&](Eigen::Index col) {
    double g = 0, h = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = col < 0 ? 1.0 : z(i, col);
      if (x == 0.0) continue;
      const double p = sigmoid(margin[i]);
      g += (p - y[static_cast<std::size_t>(i)]) * x;
      h += p * (1 - p) * x * x;
    }
    return std::pair{g, h};
  };
  auto apply = [&](Eigen::Index col, double delta) {
    if (col < 0) margin.array() += delta;
    else margin += delta * z.col(col);
  };

  for (m.iterations = 0; m.iterations < opt.max_iter; ++m.iterations) {
    double max_change = 0;
    {  // bias, unpenalised
      auto [g, h] = grad_hess(-1);
      double delta = h > 1e-12 ? -g / h : 0.0;
      if (delta != 0.0 && delta_loss(-1, delta) > 0) delta = -g / (0.25 * static_cast<double>(n));
      if (delta != 0.0) {
        apply(-1, delta);
        b += delta;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      if (col_sq[j] == 0.0) continue;
      auto [g, h] = grad_hess(j);
      const double wj = w[j];
      if (wj == 0.0 && std::abs(g) <= lambda) continue;
      double target = h > 1e-12 ? soft(h * wj - g, lambda) / h : wj;
      double delta = target - wj;
      if (delta != 0.0 && delta_loss(j, delta) + lambda * (std::abs(target) - std::abs(wj)) > 0) {
        const double hb = 0.25 * col_sq[j];
        target = soft(hb * wj - g, lambda) / hb;
        delta = target - wj;
      }
      if (delta == 0.0) continue;
      apply(j, delta);
      w[j] = target;
      max_change = std::max(max_change, std::abs(delta));
    }
    if (max_change < opt.tol) {
      m.converged = true;
      ++m.iterations;
      break;
    }
  }
  m.w = w;
  m.b = b;
}

}  // namespace detail

/// Fits logistic loss + (1/c) * penalty. L2 by damped Newton, L1 by coordinate descent.
inline LogRegModel train_logreg(const Matrix& x, const Labels& y, Penalty penalty, double c,
                                const LogRegOptions& opt = {}) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DimensionMismatch("logreg: rows != targets");
  require_both_classes(y, "logreg");
  if (!(c > 0)) throw InvalidArgument("logreg: c must be > 0");
  LogRegModel m;
  m.penalty = penalty;
  m.c = c;
  m.standardizer = opt.standardize ? Standardizer::fit(x) : Standardizer::identity(x.cols());
  const Matrix z = m.standardizer.apply(x);
  const double lambda = std::isfinite(c) ? 1.0 / c : 0.0;
  if (penalty == Penalty::L2) detail::fit_logreg_l2(z, y, lambda, opt, m);
  else detail::fit_logreg_l1(z, y, lambda, opt, m);
  return m;
}

}  // namespace sprobe
