#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <vector>

#include "sprobe/sae.hpp"
#include "sprobe/tensor_io.hpp"

namespace sprobe {

/// Ground-truth generative model: sparse nonnegative combinations of unit-norm feature
/// directions plus isotropic Gaussian noise.
struct FeatureWorld {
  Matrix dictionary;                  // w_true x d_model, unit-norm rows
  std::vector<double> firing_prob;    // per feature
  std::vector<double> magnitude_lo;   // magnitudes ~ Uniform[lo, hi] when firing
  std::vector<double> magnitude_hi;
  std::vector<std::size_t> target_features;  // target = OR over these features
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  std::size_t d_model() const { return static_cast<std::size_t>(dictionary.cols()); }
  std::size_t width() const { return static_cast<std::size_t>(dictionary.rows()); }
};

struct WorldOptions {
  double noise_sigma = 0.05;
  double background_firing = 0.02;
  std::vector<std::size_t> target_features{0};  // one feature, or two for an OR rule
  double magnitude_lo = 0.75;  // mean-1 uniform law
  double magnitude_hi = 1.25;
};

namespace detail {

inline Eigen::RowVectorXd random_unit(std::size_t d, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = g(rng);
  return v / v.norm();
}

}  // namespace detail

/// Seeded dictionary construction.
///
/// When w_true <= d_model the rows are orthonormal. Otherwise the target feature rows are
/// orthonormal random directions and every other row is a random direction in their
/// orthogonal complement, refined toward a tight frame there. The target features thus
/// receive no interference from background features, and background features are
/// spread as evenly as the dimension allows.
inline FeatureWorld generate_world(std::size_t d_model, std::size_t w_true, std::uint64_t seed,
                                   const WorldOptions& opt = {}) {
  if (d_model < 2 || w_true < 2) throw InvalidArgument("generate_world: d_model and w_true must be >= 2");
  if (opt.target_features.empty() || opt.target_features.size() > 2)
    throw InvalidArgument("generate_world: target rule needs one or two features");
  for (auto f : opt.target_features)
    if (f >= w_true) throw InvalidArgument("generate_world: target feature out of range");
  if (opt.target_features.size() == 2 && opt.target_features[0] == opt.target_features[1])
    throw InvalidArgument("generate_world: OR rule needs two distinct features");
  if (!(opt.background_firing > 0 && opt.background_firing < 1)) throw InvalidArgument("firing probability must lie in (0, 1)");
  if (opt.noise_sigma < 0) throw InvalidArgument("noise_sigma must be >= 0");
  if (!(opt.magnitude_lo > 0 && opt.magnitude_hi >= opt.magnitude_lo)) throw InvalidArgument("magnitudes must be positive");

  Rng rng(seed);
  FeatureWorld w;
  w.seed = seed;
  w.noise_sigma = opt.noise_sigma;
  w.target_features = opt.target_features;
  const auto d = static_cast<Eigen::Index>(d_model);
  w.dictionary.resize(static_cast<Eigen::Index>(w_true), d);

  auto orthonormalise_into = [&](const std::vector<Eigen::Index>& rows, std::vector<Eigen::RowVectorXd>& basis) {
    for (auto r : rows) {
      Eigen::RowVectorXd v;
      do {
        v = detail::random_unit(d_model, rng);
        for (const auto& b : basis) v -= v.dot(b) * b;
      } while (v.norm() < 1e-6);
      v /= v.norm();
      basis.push_back(v);
      w.dictionary.row(r) = v;
    }
  };

  std::vector<Eigen::RowVectorXd> basis;
  if (w_true <= d_model) {
    std::vector<Eigen::Index> all(w_true);
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    orthonormalise_into(all, basis);
  } else {
    if (opt.target_features.size() >= d_model) throw InvalidArgument("generate_world: too many target features for d_model");
    std::vector<Eigen::Index> targets(opt.target_features.begin(), opt.target_features.end());
    orthonormalise_into(targets, basis);
    Matrix t(d, static_cast<Eigen::Index>(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) t.col(static_cast<Eigen::Index>(i)) = basis[i].transpose();
    const Matrix proj = Matrix::Identity(d, d) - t * t.transpose();
    std::vector<Eigen::Index> others;
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(w_true); ++r)
      if (std::find(targets.begin(), targets.end(), r) == targets.end()) others.push_back(r);
    Matrix o(static_cast<Eigen::Index>(others.size()), d);
    for (std::size_t i = 0; i < others.size(); ++i) {
      Eigen::RowVectorXd v;
      do v = detail::random_unit(d_model, rng) * proj; while (v.norm() < 1e-6);
      o.row(static_cast<Eigen::Index>(i)) = v / v.norm();
    }
    if (others.size() + basis.size() >= d_model) {
      for (int iter = 0; iter < 10; ++iter) {
        const Eigen::MatrixXd s = o.transpose() * o + t * t.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
        const Eigen::MatrixXd inv_sqrt = eig.eigenvectors() * eig.eigenvalues().cwiseMax(1e-12).cwiseInverse().cwiseSqrt().asDiagonal() *
                                         eig.eigenvectors().transpose();
        o = (o * inv_sqrt) * proj;
        o.rowwise().normalize();
      }
    }
    for (std::size_t i = 0; i < others.size(); ++i) w.dictionary.row(others[i]) = o.row(static_cast<Eigen::Index>(i));
  }

  w.firing_prob.assign(w_true, opt.background_firing);
  const double target_p = opt.target_features.size() == 1 ? 0.5 : 1.0 - std::sqrt(0.5);
  for (auto f : opt.target_features) w.firing_prob[f] = target_p;
  w.magnitude_lo.assign(w_true, opt.magnitude_lo);
  w.magnitude_hi.assign(w_true, opt.magnitude_hi);
  return w;
}

/// A sampled dataset with the ground-truth firing pattern of every token.
struct SampledDataset {
  LabeledDataset data;
  Matrix firing;  // (n * n_tokens) x w_true, 0/1, row e * n_tokens + t

  /// Firing pattern of the final token of each example.
  Matrix last_token_firing() const {
    const auto t = data.features.n_tokens;
    Matrix out(static_cast<Eigen::Index>(data.size()), firing.cols());
    for (std::size_t e = 0; e < data.size(); ++e) out.row(static_cast<Eigen::Index>(e)) = firing.row(static_cast<Eigen::Index>(e * t + t - 1));
    return out;
  }
};

struct SampleOptions {
  double test_fraction = 0.2;
  bool variable_length = false;  // draw each example's valid-token count uniformly
};

/// Samples n examples of n_tokens tokens each. Targets follow the world's rule at the
/// final token. Split as in load_dataset with the same seed.
inline SampledDataset sample_dataset(const FeatureWorld& w, std::size_t n, std::size_t n_tokens, std::uint64_t seed,
                                     const SampleOptions& opt = {}) {
  if (n < 4) throw InvalidArgument("sample_dataset: n must be >= 4");
  if (n_tokens < 1) throw InvalidArgument("sample_dataset: n_tokens must be >= 1");
  if (w.width() < 2 || w.d_model() < 2 || w.firing_prob.size() != w.width()) throw InvalidArgument("sample_dataset: degenerate world");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  SampledDataset out;
  auto& x = out.data.features;
  x = ActivationTensor(n, n_tokens, w.d_model());
  out.firing = Matrix::Zero(static_cast<Eigen::Index>(n * n_tokens), static_cast<Eigen::Index>(w.width()));
  out.data.targets.assign(n, 0);
  Eigen::RowVectorXd act(static_cast<Eigen::Index>(w.d_model()));
  for (std::size_t e = 0; e < n; ++e) {
    if (opt.variable_length && n_tokens > 1)
      x.token_mask[e] = static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(1, n_tokens)(rng));
    for (std::size_t t = 0; t < n_tokens; ++t) {
      const auto row = static_cast<Eigen::Index>(e * n_tokens + t);
      act.setZero();
      for (std::size_t f = 0; f < w.width(); ++f) {
        if (unif(rng) >= w.firing_prob[f]) continue;
        const double m = w.magnitude_lo[f] + (w.magnitude_hi[f] - w.magnitude_lo[f]) * unif(rng);
        act += m * w.dictionary.row(static_cast<Eigen::Index>(f));
        out.firing(row, static_cast<Eigen::Index>(f)) = 1.0;
      }
      if (w.noise_sigma > 0)
        for (auto& v : act) v += w.noise_sigma * noise(rng);
      if (t < x.first_valid(e)) continue;  // pad positions stay zero
      auto dst = x.token(e, t);
      for (std::size_t d = 0; d < w.d_model(); ++d) dst[d] = static_cast<float>(act[static_cast<Eigen::Index>(d)]);
    }
    const auto last = static_cast<Eigen::Index>(e * n_tokens + n_tokens - 1);
    for (auto f : w.target_features)
      if (out.firing(last, static_cast<Eigen::Index>(f)) > 0) out.data.targets[e] = 1;
  }
  out.data.split = default_split(n, seed, opt.test_fraction);
  out.data.validate();
  return out;
}

/// Oracle encoder for a world plus per-latent calibration agreement.
struct OracleSae {
  SAEWeights sae;
  std::vector<double> agreement;  // fraction of calibration rows where latent fired == feature fired
  std::vector<std::size_t> failed;  // latents below the required agreement
};

struct OracleOptions {
  std::size_t calibration_n = 20000;
  std::uint64_t seed = 0x5eed;
  double required_agreement = 0.99;
};

/// JumpReLU encoder with w_enc = dictionary^T, b_enc = 0, and per-latent thresholds
/// chosen to maximise firing agreement on a seeded, noisy calibration sample.
inline OracleSae oracle_sae(const FeatureWorld& w, const OracleOptions& opt = {}) {
  OracleSae out;
  auto& sae = out.sae;
  sae.id = "oracle";
  sae.kind = ActivationKind::JumpReLU;
  sae.w_enc = w.dictionary.transpose();
  sae.b_enc = Vector::Zero(static_cast<Eigen::Index>(w.width()));
  sae.theta = Vector::Zero(static_cast<Eigen::Index>(w.width()));
  double l0 = 0;
  for (double p : w.firing_prob) l0 += p;
  sae.nominal_l0 = l0;

  const auto cal = sample_dataset(w, opt.calibration_n, 1, opt.seed);
  const Matrix z = cal.data.features.last_token() * sae.w_enc;
  const auto n = static_cast<std::size_t>(z.rows());
  out.agreement.resize(w.width());
  std::vector<std::pair<double, int>> col(n);
  for (std::size_t i = 0; i < w.width(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    std::size_t fired_total = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const int f = cal.firing(static_cast<Eigen::Index>(r), c) > 0;
      col[r] = {z(static_cast<Eigen::Index>(r), c), f};
      fired_total += static_cast<std::size_t>(f);
    }
    std::sort(col.begin(), col.end());
    // Threshold between sorted positions k-1 and k: rows [0, k) are off, [k, n) are on.
    // Only nonnegative thresholds are admissible, so the on-set must be strictly positive.
    std::size_t best_agree = 0, off_unfired = 0, on_fired = fired_total;
    double theta = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      if (k > 0) {
        off_unfired += static_cast<std::size_t>(col[k - 1].second == 0);
        on_fired -= static_cast<std::size_t>(col[k - 1].second == 1);
      }
      if (k < n && !(col[k].first > 0)) continue;
      if (k > 0 && k < n && col[k - 1].first == col[k].first) continue;
      const double cand = k == 0 ? 0.0
                          : k == n ? std::max(0.0, col[n - 1].first)
                                   : std::max(0.0, 0.5 * (col[k - 1].first + col[k].first));
      if (off_unfired + on_fired > best_agree) {
        best_agree = off_unfired + on_fired;
        theta = cand;
      }
    }
    sae.theta[c] = theta;
    std::size_t agree = 0;
    for (const auto& [v, f] : col) agree += static_cast<std::size_t>((v > sae.theta[c]) == (f == 1));
    out.agreement[i] = static_cast<double>(agree) / static_cast<double>(n);
    if (out.agreement[i] < opt.required_agreement) out.failed.push_back(i);
  }
  sae.validate();
  return out;
}

}  // namespace sprobe
