#pragma once

#include <vector>

#include "sprobe/probes/adam.hpp"
#include "sprobe/probes/standardize.hpp"

namespace sprobe {

struct MlpParams {
  std::size_t depth = 1;  // hidden layers
  std::size_t width = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
};

/// Fully connected ReLU network with one logit output. Parameters are a flat vector:
/// for each layer, the (fan_in x fan_out) weight block row-major, then the bias.
struct MlpNet {
  std::vector<std::size_t> sizes;  // input, hidden..., 1
  Vector params;

  static MlpNet make(std::size_t n_in, std::size_t depth, std::size_t width) {
    MlpNet net;
    net.sizes.push_back(n_in);
    for (std::size_t l = 0; l < depth; ++l) net.sizes.push_back(width);
    net.sizes.push_back(1);
    net.params = Vector::Zero(static_cast<Eigen::Index>(net.param_count()));
    return net;
  }

  std::size_t layers() const { return sizes.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
    return n;
  }

  std::size_t offset(std::size_t layer) const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer; ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
    return n;
  }

  /// Glorot-uniform weights, zero biases.
  void init(Rng& rng) {
    params.setZero();
    for (std::size_t l = 0; l < layers(); ++l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
      std::uniform_real_distribution<double> u(-bound, bound);
      const auto off = offset(l);
      for (std::size_t k = 0; k < sizes[l] * sizes[l + 1]; ++k) params[static_cast<Eigen::Index>(off + k)] = u(rng);
    }
  }

  using WeightMap = Eigen::Map<const Matrix>;

  WeightMap weights(const Vector& p, std::size_t l) const {
    return WeightMap(p.data() + offset(l), static_cast<Eigen::Index>(sizes[l]), static_cast<Eigen::Index>(sizes[l + 1]));
  }
  Eigen::Map<const Eigen::RowVectorXd> bias(const Vector& p, std::size_t l) const {
    return Eigen::Map<const Eigen::RowVectorXd>(p.data() + offset(l) + sizes[l] * sizes[l + 1], static_cast<Eigen::Index>(sizes[l + 1]));
  }

  Vector forward(const Matrix& x) const { return forward(params, x); }

  Vector forward(const Vector& p, const Matrix& x) const {
    Matrix h = x;
    for (std::size_t l = 0; l < layers(); ++l) {
      Matrix a = h * weights(p, l);
      a.rowwise() += bias(p, l);
      h = l + 1 < layers() ? Matrix(a.cwiseMax(0.0)) : a;
    }
    return h.col(0);
  }

  /// Mean logistic loss plus 0.5 * weight_decay * sum of squared weights (biases
  /// excluded); writes the gradient into `grad`.
  double loss_and_grad(const Vector& p, const Matrix& x, const Labels& y, double weight_decay, Vector& grad) const {
    const auto L = layers();
    std::vector<Matrix> acts(L + 1);  // post-activation inputs to each layer
    std::vector<Matrix> pre(L);
    acts[0] = x;
    for (std::size_t l = 0; l < L; ++l) {
      pre[l] = acts[l] * weights(p, l);
      pre[l].rowwise() += bias(p, l);
      acts[l + 1] = l + 1 < L ? Matrix(pre[l].cwiseMax(0.0)) : pre[l];
    }
    const double n = static_cast<double>(x.rows());
    const Vector logits = acts[L].col(0);
    double loss = mean_logloss(logits, y);
    Matrix delta(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) delta(i, 0) = (sigmoid(logits[i]) - y[static_cast<std::size_t>(i)]) / n;
    grad = Vector::Zero(p.size());
    for (std::size_t l = L; l-- > 0;) {
      const auto off = static_cast<Eigen::Index>(offset(l));
      const auto fi = static_cast<Eigen::Index>(sizes[l]), fo = static_cast<Eigen::Index>(sizes[l + 1]);
      const auto w = weights(p, l);
      Eigen::Map<Matrix> gw(grad.data() + off, fi, fo);
      gw = acts[l].transpose() * delta + weight_decay * w;
      grad.segment(off + fi * fo, fo) = delta.colwise().sum().transpose();
      loss += 0.5 * weight_decay * w.squaredNorm();
      if (l > 0) delta = ((delta * w.transpose()).array() * (pre[l - 1].array() > 0).cast<double>()).matrix();
    }
    return loss;
  }
};

struct MlpModel {
  Standardizer standardizer;
  MlpNet net;
  MlpParams params;
  std::size_t epochs_run = 0;

  Vector decision(const Matrix& x) const { return net.forward(standardizer.apply(x)); }
};

/// Adam on mini-batches of min(64, n). Up to max_epochs; when at least 20 examples are
/// available a seeded 10% validation subset drives early stopping (patience epochs
/// without improvement) and the best parameters are kept.
inline MlpModel train_mlp(const Matrix& x, const Labels& y, const MlpParams& p) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DimensionMismatch("mlp: rows != targets");
  require_both_classes(y, "mlp");
  if (p.depth < 1 || p.width < 1) throw InvalidArgument("mlp: depth and width must be >= 1");
  MlpModel m;
  m.params = p;
  m.standardizer = Standardizer::fit(x);
  const Matrix z = m.standardizer.apply(x);
  Rng rng(p.seed);
  m.net = MlpNet::make(static_cast<std::size_t>(x.cols()), p.depth, p.width);
  m.net.init(rng);

  const auto n = y.size();
  Indices fit_idx, stop_idx;
  {
    const Indices perm = permutation(n, rng);
    const std::size_t n_stop = n >= 20 ? n / 10 : 0;
    stop_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_stop));
    fit_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_stop), perm.end());
    const auto pos = count_positive(labels_at(y, fit_idx));
    if (pos == 0 || pos == fit_idx.size()) {  // keep both classes in the fitting part
      fit_idx = perm;
      stop_idx.clear();
    }
    std::sort(fit_idx.begin(), fit_idx.end());
    std::sort(stop_idx.begin(), stop_idx.end());
  }
  const Matrix zf = rows_at(z, fit_idx);
  const Labels yf = labels_at(y, fit_idx);
  const Matrix zs = rows_at(z, stop_idx);
  const Labels ys = labels_at(y, stop_idx);
  const std::size_t batch = std::min<std::size_t>(64, fit_idx.size());

  Adam opt(m.net.params.size(), p.learning_rate);
  Vector grad;
  auto monitor = [&]() {
    Vector g;
    return stop_idx.empty() ? m.net.loss_and_grad(m.net.params, zf, yf, p.weight_decay, g)
                            : mean_logloss(m.net.forward(zs), ys);
  };
  double best_loss = monitor();
  Vector best = m.net.params;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < p.max_epochs; ++epoch) {
    const Indices order = permutation(fit_idx.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const Indices b(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      m.net.loss_and_grad(m.net.params, rows_at(zf, b), labels_at(yf, b), p.weight_decay, grad);
      opt.step(m.net.params, grad);
    }
    m.epochs_run = epoch + 1;
    const double loss = monitor();
    if (loss < best_loss - 1e-12) {
      best_loss = loss;
      best = m.net.params;
      stale = 0;
    } else if (++stale >= p.patience) {
      break;
    }
  }
  m.net.params = best;
  return m;
}

}  // namespace sprobe
