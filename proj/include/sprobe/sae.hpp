#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sprobe/binary_io.hpp"
#include "sprobe/tensor.hpp"

namespace sprobe {

enum class ActivationKind : std::uint8_t { ReLU = 0, JumpReLU = 1, TopK = 2, BatchTopK = 3 };

inline const char* to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::JumpReLU: return "jumprelu";
    case ActivationKind::TopK: return "topk";
    case ActivationKind::BatchTopK: return "batchtopk";
  }
  return "?";
}

/// Encoder half of a sparse autoencoder.
struct SAEWeights {
  std::string id;
  Matrix w_enc;  // d_model x width
  Vector b_enc;  // width
  ActivationKind kind = ActivationKind::ReLU;
  Vector theta;  // JumpReLU thresholds, width entries
  std::uint32_t k_active = 0;  // TopK / BatchTopK
  double nominal_l0 = 0.0;

  std::size_t d_model() const { return static_cast<std::size_t>(w_enc.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(w_enc.cols()); }

  void validate() const {
    if (b_enc.size() != w_enc.cols()) throw InvalidArgument("b_enc length != encoder width");
    if (!w_enc.allFinite() || !b_enc.allFinite()) throw InvalidArgument("SAE weights must be finite");
    switch (kind) {
      case ActivationKind::JumpReLU:
        if (theta.size() != w_enc.cols()) throw InvalidArgument("JumpReLU theta length != width");
        if ((theta.array() < 0).any() || !theta.allFinite()) throw InvalidArgument("JumpReLU theta must be finite and >= 0");
        break;
      case ActivationKind::TopK:
      case ActivationKind::BatchTopK:
        if (k_active < 1 || k_active > width()) throw InvalidArgument("k_active must lie in [1, width]");
        break;
      case ActivationKind::ReLU: break;
    }
  }
};

/// Nonnegative SAE codes, one example per row.
struct LatentMatrix {
  Matrix values;
  std::string source;

  std::size_t width() const { return static_cast<std::size_t>(values.cols()); }
};

/// Per-token SAE codes for a multi-token tensor; row (e * n_tokens + t).
struct TokenLatents {
  Matrix values;
  std::size_t n_examples = 0;
  std::size_t n_tokens = 1;
  std::vector<std::uint32_t> token_mask;
  std::string source;
};

namespace detail {

// Keeps the `keep` largest positive entries among `candidates` (flat positions into `z`),
// ties broken by lower position; zeroes everything else in those positions.
inline void keep_largest(Eigen::Ref<Matrix> z, std::vector<Eigen::Index> candidates, std::size_t keep) {
  auto* p = z.data();
  std::erase_if(candidates, [&](Eigen::Index i) { return !(p[i] > 0); });
  if (candidates.size() > keep) {
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
    candidates.resize(keep);
  }
  std::vector<char> kept(static_cast<std::size_t>(z.size()), 0);
  for (auto i : candidates) kept[static_cast<std::size_t>(i)] = 1;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (!kept[static_cast<std::size_t>(i)]) p[i] = 0.0;
}

}  // namespace detail

/// Applies the SAE nonlinearity in place to pre-activations (rows = one batch).
inline void apply_activation(Matrix& z, const SAEWeights& sae) {
  const Eigen::Index w = z.cols();
  switch (sae.kind) {
    case ActivationKind::ReLU:
      z = z.cwiseMax(0.0);
      break;
    case ActivationKind::JumpReLU:
      for (Eigen::Index r = 0; r < z.rows(); ++r)
        for (Eigen::Index c = 0; c < w; ++c)
          if (!(z(r, c) > sae.theta[c])) z(r, c) = 0.0;
      break;
    case ActivationKind::BatchTopK:
      if (z.rows() > 1) {
        std::vector<Eigen::Index> all(static_cast<std::size_t>(z.size()));
        std::iota(all.begin(), all.end(), Eigen::Index{0});
        detail::keep_largest(z, std::move(all), static_cast<std::size_t>(sae.k_active) * static_cast<std::size_t>(z.rows()));
        break;
      }
      [[fallthrough]];  // a batch of one is per-example TopK
    case ActivationKind::TopK:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        std::vector<Eigen::Index> row(static_cast<std::size_t>(w));
        std::iota(row.begin(), row.end(), Eigen::Index{0});
        Eigen::Ref<Matrix> view = z.row(r);
        detail::keep_largest(view, std::move(row), sae.k_active);
      }
      break;
  }
}

/// Encodes a batch of activation rows. For BatchTopK the rows form one batch unless
/// `per_example` is set, in which case every row is encoded as a batch of one.
inline Matrix encode_rows(const Matrix& x, const SAEWeights& sae, bool per_example = false) {
  if (static_cast<std::size_t>(x.cols()) != sae.d_model())
    throw DimensionMismatch("activation width " + std::to_string(x.cols()) + " != SAE d_model " +
                            std::to_string(sae.d_model()));
  Matrix z = x * sae.w_enc;
  z.rowwise() += sae.b_enc.transpose();
  if (per_example && sae.kind == ActivationKind::BatchTopK) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      Matrix row = z.row(r);
      apply_activation(row, sae);
      z.row(r) = row;
    }
  } else {
    apply_activation(z, sae);
  }
  return z;
}

/// Encodes every valid token. Pad positions are left at zero and excluded from the
/// BatchTopK batch.
inline TokenLatents encode(const ActivationTensor& x, const SAEWeights& sae, bool per_example = false) {
  if (x.d_model != sae.d_model()) throw DimensionMismatch("activation d_model != SAE d_model");
  Indices rows;
  for (std::size_t e = 0; e < x.n_examples; ++e)
    for (std::size_t t = x.first_valid(e); t < x.n_tokens; ++t) rows.push_back(e * x.n_tokens + t);
  Matrix in(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(x.d_model));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const float* src = x.data.data() + rows[r] * x.d_model;
    for (std::size_t d = 0; d < x.d_model; ++d) in(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = src[d];
  }
  const Matrix z = encode_rows(in, sae, per_example);
  TokenLatents out;
  out.values = Matrix::Zero(static_cast<Eigen::Index>(x.n_examples * x.n_tokens), static_cast<Eigen::Index>(sae.width()));
  for (std::size_t r = 0; r < rows.size(); ++r) out.values.row(static_cast<Eigen::Index>(rows[r])) = z.row(static_cast<Eigen::Index>(r));
  out.n_examples = x.n_examples;
  out.n_tokens = x.n_tokens;
  out.token_mask = x.token_mask;
  out.source = sae.id;
  return out;
}

// ---------------------------------------------------------------------------
// SPSW weights file:
//   "SPSW" | u32 version | u64 d_model | u64 width | u8 kind |
//   JumpReLU: f32 theta[width]; TopK/BatchTopK: u32 k_active; ReLU: nothing |
//   f32 w_enc[d_model * width] (row-major) | f32 b_enc[width]

inline constexpr char kSaeMagic[4] = {'S', 'P', 'S', 'W'};
inline constexpr std::uint32_t kSaeVersion = 1;

inline std::string encode_sae(const SAEWeights& sae) {
  sae.validate();
  std::string out(kSaeMagic, 4);
  binio::put_le<std::uint32_t>(out, kSaeVersion);
  binio::put_le<std::uint64_t>(out, sae.d_model());
  binio::put_le<std::uint64_t>(out, sae.width());
  binio::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(sae.kind));
  if (sae.kind == ActivationKind::JumpReLU)
    for (Eigen::Index i = 0; i < sae.theta.size(); ++i) binio::put_le<float>(out, static_cast<float>(sae.theta[i]));
  if (sae.kind == ActivationKind::TopK || sae.kind == ActivationKind::BatchTopK)
    binio::put_le<std::uint32_t>(out, sae.k_active);
  for (Eigen::Index r = 0; r < sae.w_enc.rows(); ++r)
    for (Eigen::Index c = 0; c < sae.w_enc.cols(); ++c) binio::put_le<float>(out, static_cast<float>(sae.w_enc(r, c)));
  for (Eigen::Index i = 0; i < sae.b_enc.size(); ++i) binio::put_le<float>(out, static_cast<float>(sae.b_enc[i]));
  return out;
}

inline SAEWeights decode_sae(std::string bytes) {
  binio::Reader in(std::move(bytes));
  if (!in.has(4) || in.take(4) != std::string(kSaeMagic, 4)) throw BadMagicError();
  const auto version = in.get<std::uint32_t>();
  if (version != kSaeVersion) throw VersionMismatchError(version);
  const auto d = in.get<std::uint64_t>();
  const auto w = in.get<std::uint64_t>();
  const auto tag = in.get<std::uint8_t>();
  if (tag > 3) throw FormatError("unknown SAE activation kind " + std::to_string(tag));
  if (static_cast<long double>(d) * w * 4 > static_cast<long double>(in.remaining())) throw TruncatedPayloadError();
  SAEWeights sae;
  sae.kind = static_cast<ActivationKind>(tag);
  const auto dw = static_cast<Eigen::Index>(d), ww = static_cast<Eigen::Index>(w);
  if (sae.kind == ActivationKind::JumpReLU) {
    sae.theta.resize(ww);
    for (Eigen::Index i = 0; i < ww; ++i) sae.theta[i] = in.get<float>();
  }
  if (sae.kind == ActivationKind::TopK || sae.kind == ActivationKind::BatchTopK) sae.k_active = in.get<std::uint32_t>();
  sae.w_enc.resize(dw, ww);
  for (Eigen::Index r = 0; r < dw; ++r)
    for (Eigen::Index c = 0; c < ww; ++c) sae.w_enc(r, c) = in.get<float>();
  sae.b_enc.resize(ww);
  for (Eigen::Index i = 0; i < ww; ++i) sae.b_enc[i] = in.get<float>();
  if (in.remaining() != 0) throw ShapeError("trailing bytes after SAE payload");
  sae.validate();
  return sae;
}

inline void write_sae(const SAEWeights& sae, const std::string& path) { binio::dump(path, encode_sae(sae)); }
inline SAEWeights read_sae(const std::string& path) { return decode_sae(binio::slurp(path)); }

}  // namespace sprobe
