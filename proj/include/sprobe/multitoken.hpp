#pragma once

#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "sprobe/latents.hpp"
#include "sprobe/probes/adam.hpp"
#include "sprobe/probes/pca.hpp"
#include "sprobe/probes/probe.hpp"

namespace sprobe {

/// Every token (valid or pad) as a row, row index e * n_tokens + t.
inline Matrix token_rows(const ActivationTensor& x) {
  Matrix out(static_cast<Eigen::Index>(x.n_examples * x.n_tokens), static_cast<Eigen::Index>(x.d_model));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = x.data[static_cast<std::size_t>(i)];
  return out;
}

/// Pools raw activation dimensions over each example's valid tokens.
inline Matrix pool_activations(const ActivationTensor& x, Pooling mode) {
  return pool_token_rows(token_rows(x), x.n_examples, x.n_tokens, x.token_mask, mode);
}

/// Valid tokens of example e as a (valid x d_model) matrix.
inline Matrix valid_tokens(const ActivationTensor& x, std::size_t e) {
  const std::size_t first = x.first_valid(e);
  Matrix out(static_cast<Eigen::Index>(x.n_tokens - first), static_cast<Eigen::Index>(x.d_model));
  for (std::size_t t = first; t < x.n_tokens; ++t) {
    auto row = x.token(e, t);
    for (std::size_t d = 0; d < x.d_model; ++d) out(static_cast<Eigen::Index>(t - first), static_cast<Eigen::Index>(d)) = row[d];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention-pooled probe: logit = sum_t softmax_t(x_t . q) (x_t . v) + b over valid tokens.

struct AttentionProbe {
  Vector q;
  Vector v;
  double b = 0.0;
  Standardizer standardizer;  // applied to every token before scoring
};

/// Logit for one example given its (already standardised) valid tokens.
inline double attn_logit(const Vector& q, const Vector& v, double b, const Matrix& tokens) {
  if (tokens.rows() == 0) throw InvalidArgument("attention probe: example has no valid tokens");
  const Vector u = tokens * q;
  const Vector s = tokens * v;
  const double mx = u.maxCoeff();
  const Vector a = (u.array() - mx).exp();
  return a.dot(s) / a.sum() + b;
}

inline double attn_score(const AttentionProbe& probe, const ActivationTensor& x, std::size_t example) {
  return attn_logit(probe.q, probe.v, probe.b, probe.standardizer.apply(valid_tokens(x, example)));
}

inline Vector attn_scores(const AttentionProbe& probe, const ActivationTensor& x) {
  if (x.d_model != static_cast<std::size_t>(probe.q.size())) throw DimensionMismatch("attention probe: d_model mismatch");
  Vector out(static_cast<Eigen::Index>(x.n_examples));
  for (std::size_t e = 0; e < x.n_examples; ++e) out[static_cast<Eigen::Index>(e)] = attn_score(probe, x, e);
  return out;
}

struct AttnParams {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
};

/// Mean logistic loss over examples plus 0.5 * weight_decay * (|q|^2 + |v|^2).
/// Parameters are packed [q; v; b]. Writes the gradient into `grad`.
inline double attn_loss_and_grad(const Vector& params, const std::vector<Matrix>& examples, const Labels& y,
                                 double weight_decay, Vector& grad) {
  const Eigen::Index d = (params.size() - 1) / 2;
  const auto q = params.head(d), v = params.segment(d, d);
  const double b = params[2 * d];
  grad = Vector::Zero(params.size());
  double loss = 0;
  const double n = static_cast<double>(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Matrix& x = examples[i];
    const Vector u = x * q;
    const Vector s = x * v;
    Vector a = (u.array() - u.maxCoeff()).exp();
    a /= a.sum();
    const double pooled = a.dot(s);
    const double logit = pooled + b;
    loss += y[i] ? softplus(-logit) : softplus(logit);
    const double dl = (sigmoid(logit) - y[i]) / n;
    // d pooled / d v = sum_t a_t x_t ; d pooled / d q = sum_t a_t (s_t - pooled) x_t
    grad.segment(d, d) += dl * (x.transpose() * a);
    grad.head(d) += dl * (x.transpose() * (a.array() * (s.array() - pooled)).matrix());
    grad[2 * d] += dl;
  }
  loss /= n;
  loss += 0.5 * weight_decay * (q.squaredNorm() + v.squaredNorm());
  grad.head(2 * d) += weight_decay * params.head(2 * d);
  return loss;
}

/// Trains q, v, b with Adam on mini-batches of min(64, n), seeded Gaussian init of scale
/// 1/sqrt(d), up to max_epochs with early stopping on a 10% held-back subset (same rule
/// as the MLP probe). Tokens are standardised with statistics over valid training tokens.
inline AttentionProbe train_attn_probe(const ActivationTensor& x, const Labels& y, const AttnParams& p) {
  if (x.n_examples != y.size()) throw DimensionMismatch("attention probe: examples != targets");
  require_both_classes(y, "attention probe");
  AttentionProbe probe;
  const auto d = static_cast<Eigen::Index>(x.d_model);
  {
    Matrix all(0, d);
    std::vector<Matrix> parts;
    Eigen::Index rows = 0;
    for (std::size_t e = 0; e < x.n_examples; ++e) {
      parts.push_back(valid_tokens(x, e));
      rows += parts.back().rows();
    }
    all.resize(rows, d);
    Eigen::Index r = 0;
    for (const auto& m : parts) {
      all.middleRows(r, m.rows()) = m;
      r += m.rows();
    }
    probe.standardizer = Standardizer::fit(all);
  }
  std::vector<Matrix> ex;
  for (std::size_t e = 0; e < x.n_examples; ++e) ex.push_back(probe.standardizer.apply(valid_tokens(x, e)));

  Rng rng(p.seed);
  Vector params(2 * d + 1);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  for (Eigen::Index i = 0; i < 2 * d; ++i) params[i] = gauss(rng);
  params[2 * d] = 0.0;

  const auto n = y.size();
  Indices fit_idx, stop_idx;
  {
    const Indices perm = permutation(n, rng);
    const std::size_t n_stop = n >= 20 ? n / 10 : 0;
    stop_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_stop));
    fit_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_stop), perm.end());
    const auto pos = count_positive(labels_at(y, fit_idx));
    if (pos == 0 || pos == fit_idx.size()) {
      fit_idx = perm;
      stop_idx.clear();
    }
    std::sort(fit_idx.begin(), fit_idx.end());
    std::sort(stop_idx.begin(), stop_idx.end());
  }
  auto gather = [&](const Indices& idx) {
    std::vector<Matrix> out;
    for (auto i : idx) out.push_back(ex[i]);
    return out;
  };
  const auto ex_fit = gather(fit_idx);
  const Labels y_fit = labels_at(y, fit_idx);
  const auto ex_stop = gather(stop_idx);
  const Labels y_stop = labels_at(y, stop_idx);
  auto monitor = [&]() {
    Vector g;
    return stop_idx.empty() ? attn_loss_and_grad(params, ex_fit, y_fit, p.weight_decay, g)
                            : attn_loss_and_grad(params, ex_stop, y_stop, 0.0, g);
  };

  Adam opt(params.size(), p.learning_rate);
  const std::size_t batch = std::min<std::size_t>(64, fit_idx.size());
  double best_loss = monitor();
  Vector best = params, grad;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < p.max_epochs; ++epoch) {
    const Indices order = permutation(fit_idx.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<Matrix> bx;
      Labels by;
      for (std::size_t k = start; k < end; ++k) {
        bx.push_back(ex_fit[order[k]]);
        by.push_back(y_fit[order[k]]);
      }
      attn_loss_and_grad(params, bx, by, p.weight_decay, grad);
      opt.step(params, grad);
    }
    const double loss = monitor();
    if (loss < best_loss - 1e-12) {
      best_loss = loss;
      best = params;
      stale = 0;
    } else if (++stale >= p.patience) {
      break;
    }
  }
  probe.q = best.head(d);
  probe.v = best.segment(d, d);
  probe.b = best[2 * d];
  return probe;
}

/// Ten random draws over the MLP learning-rate and weight-decay grids.
inline std::vector<AttnParams> attn_grid(std::uint64_t seed) {
  std::vector<AttnParams> out;
  for (const auto& h : mlp_grid(seed)) {
    const auto& m = std::get<MlpParams>(h);
    out.push_back({m.learning_rate, m.weight_decay, 200, 20, m.seed});
  }
  return out;
}

inline nlohmann::json attn_to_json(const AttentionProbe& p, const AttnParams& hp) {
  auto pack = [](const Vector& v) { return encode_doubles(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))); };
  return {{"family", "attn"},
          {"hyperparams", {{"learning_rate", hp.learning_rate}, {"weight_decay", hp.weight_decay},
                           {"max_epochs", hp.max_epochs}, {"patience", hp.patience}, {"seed", hp.seed}}},
          {"params", {{"q", pack(p.q)}, {"v", pack(p.v)}, {"b", p.b},
                      {"standardizer", {{"mean", pack(p.standardizer.mean)}, {"scale", pack(p.standardizer.scale)}}}}}};
}

inline AttentionProbe attn_from_json(const nlohmann::json& j) {
  auto unpack = [](const nlohmann::json& s) {
    const auto d = decode_doubles(s.get<std::string>());
    return Vector(Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size())));
  };
  try {
    if (j.at("family") != "attn") throw FormatError("not an attention probe");
    const auto& p = j.at("params");
    AttentionProbe probe;
    probe.q = unpack(p.at("q"));
    probe.v = unpack(p.at("v"));
    probe.b = p.at("b");
    probe.standardizer = {unpack(p.at("standardizer").at("mean")), unpack(p.at("standardizer").at("scale"))};
    if (probe.q.size() != probe.v.size()) throw FormatError("attention probe: q and v differ in length");
    return probe;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("attention probe json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Concatenated per-token PCA features.

/// Left-pads or left-truncates the token axis to `ctx_len`, keeping the final tokens.
inline ActivationTensor with_context_length(const ActivationTensor& x, std::size_t ctx_len) {
  if (ctx_len == 0) throw InvalidArgument("context length must be >= 1");
  ActivationTensor out(x.n_examples, ctx_len, x.d_model);
  for (std::size_t e = 0; e < x.n_examples; ++e) {
    const std::size_t keep = std::min<std::size_t>(x.token_mask[e], ctx_len);
    out.token_mask[e] = static_cast<std::uint32_t>(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      auto src = x.token(e, x.n_tokens - 1 - k);
      auto dst = out.token(e, ctx_len - 1 - k);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return out;
}

/// One shared PCA (on standardised valid training tokens) applied at every position;
/// projections are concatenated across the fixed context, pad positions left at zero.
struct ConcatPcaFeaturizer {
  std::size_t ctx_len = 0;
  Standardizer standardizer;
  PcaProjection pca;

  static ConcatPcaFeaturizer fit(const ActivationTensor& train, std::size_t n_components = 20) {
    ConcatPcaFeaturizer f;
    f.ctx_len = train.n_tokens;
    Matrix rows(0, static_cast<Eigen::Index>(train.d_model));
    std::vector<Matrix> parts;
    Eigen::Index total = 0;
    for (std::size_t e = 0; e < train.n_examples; ++e) {
      parts.push_back(valid_tokens(train, e));
      total += parts.back().rows();
    }
    rows.resize(total, static_cast<Eigen::Index>(train.d_model));
    Eigen::Index r = 0;
    for (const auto& m : parts) {
      rows.middleRows(r, m.rows()) = m;
      r += m.rows();
    }
    f.standardizer = Standardizer::fit(rows);
    f.pca = PcaProjection::fit(f.standardizer.apply(rows), n_components);
    return f;
  }

  std::size_t n_components() const { return static_cast<std::size_t>(pca.components.cols()); }

  Matrix transform(const ActivationTensor& x) const {
    if (x.n_tokens != ctx_len) throw DimensionMismatch("concat PCA: context length mismatch");
    const auto m = static_cast<Eigen::Index>(n_components());
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(x.n_examples), m * static_cast<Eigen::Index>(ctx_len));
    for (std::size_t e = 0; e < x.n_examples; ++e) {
      const Matrix proj = pca.transform(standardizer.apply(valid_tokens(x, e)));
      const std::size_t first = x.first_valid(e);
      for (Eigen::Index t = 0; t < proj.rows(); ++t)
        out.block(static_cast<Eigen::Index>(e), (static_cast<Eigen::Index>(first) + t) * m, 1, m) = proj.row(t);
    }
    return out;
  }
};

}  // namespace sprobe
