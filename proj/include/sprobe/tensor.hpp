#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sprobe/common.hpp"

namespace sprobe {

/// Activations of shape (n_examples, n_tokens, d_model), float32, row-major.
///
/// Pad tokens sit at the front of the token axis; token_mask[e] counts the valid
/// trailing tokens of example e, so valid positions are [n_tokens - mask, n_tokens).
struct ActivationTensor {
  std::size_t n_examples = 0;
  std::size_t n_tokens = 1;
  std::size_t d_model = 0;
  std::vector<std::uint32_t> token_mask;
  std::vector<float> data;

  ActivationTensor() = default;
  ActivationTensor(std::size_t examples, std::size_t tokens, std::size_t dim)
      : n_examples(examples),
        n_tokens(tokens),
        d_model(dim),
        token_mask(examples, static_cast<std::uint32_t>(tokens)),
        data(examples * tokens * dim, 0.0f) {}

  /// Last-token matrix (n_tokens = 1) from a dense matrix.
  static ActivationTensor from_matrix(const Matrix& m) {
    ActivationTensor t(static_cast<std::size_t>(m.rows()), 1, static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        t.data[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<float>(m(r, c));
    return t;
  }

  std::span<float> token(std::size_t e, std::size_t t) {
    return {data.data() + (e * n_tokens + t) * d_model, d_model};
  }
  std::span<const float> token(std::size_t e, std::size_t t) const {
    return {data.data() + (e * n_tokens + t) * d_model, d_model};
  }

  std::size_t first_valid(std::size_t e) const { return n_tokens - token_mask[e]; }

  /// Throws InvalidArgument when any structural invariant fails.
  void validate() const {
    if (data.size() != n_examples * n_tokens * d_model)
      throw InvalidArgument("tensor data length does not match shape");
    if (token_mask.size() != n_examples) throw InvalidArgument("token_mask length != n_examples");
    if (n_tokens == 0) throw InvalidArgument("n_tokens must be >= 1");
    for (auto m : token_mask)
      if (m < 1 || m > n_tokens) throw InvalidArgument("token_mask entry outside [1, n_tokens]");
    for (float v : data)
      if (!std::isfinite(v)) throw InvalidArgument("tensor contains non-finite values");
  }

  /// Rows of the final valid token of every example.
  Matrix last_token() const {
    Matrix out(static_cast<Eigen::Index>(n_examples), static_cast<Eigen::Index>(d_model));
    for (std::size_t e = 0; e < n_examples; ++e) {
      auto row = token(e, n_tokens - 1);
      for (std::size_t d = 0; d < d_model; ++d) out(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(d)) = row[d];
    }
    return out;
  }

  ActivationTensor select(const Indices& idx) const {
    ActivationTensor out(idx.size(), n_tokens, d_model);
    const std::size_t stride = n_tokens * d_model;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(idx[r] * stride), stride,
                  out.data.begin() + static_cast<std::ptrdiff_t>(r * stride));
      out.token_mask[r] = token_mask[idx[r]];
    }
    return out;
  }

  bool operator==(const ActivationTensor&) const = default;
};

/// Concatenates along the example axis. Token counts and widths must agree.
inline ActivationTensor concat_examples(const ActivationTensor& a, const ActivationTensor& b) {
  if (a.n_tokens != b.n_tokens || a.d_model != b.d_model)
    throw DimensionMismatch("cannot concatenate tensors of different token/model shape");
  ActivationTensor out = a;
  out.n_examples += b.n_examples;
  out.token_mask.insert(out.token_mask.end(), b.token_mask.begin(), b.token_mask.end());
  out.data.insert(out.data.end(), b.data.begin(), b.data.end());
  return out;
}

struct Split {
  Indices train;
  Indices val;
  Indices test;

  /// Training pool: train followed by val.
  Indices pool() const {
    Indices p = train;
    p.insert(p.end(), val.begin(), val.end());
    return p;
  }
  bool operator==(const Split&) const = default;
};

/// Activations paired with binary targets and a frozen split.
struct LabeledDataset {
  std::string id;
  ActivationTensor features;
  Labels targets;
  Split split;
  /// Optional covariate-shifted evaluation set (all examples are test examples).
  std::shared_ptr<const LabeledDataset> ood;
  /// Optional per-token ids, n_examples * n_tokens entries, for token diagnostics.
  std::vector<std::int64_t> token_ids;

  std::size_t size() const { return targets.size(); }

  void validate() const {
    features.validate();
    if (targets.size() != features.n_examples)
      throw ShapeError("target length does not match number of examples");
    for (int t : targets)
      if (t != 0 && t != 1) throw InvalidArgument("targets must be 0 or 1");
    std::vector<char> seen(targets.size(), 0);
    for (const Indices* part : {&split.train, &split.val, &split.test}) {
      for (auto i : *part) {
        if (i >= targets.size()) throw InvalidArgument("split index out of bounds");
        if (seen[i]) throw InvalidArgument("split index lists overlap");
        seen[i] = 1;
      }
    }
    if (split.test.empty()) throw InvalidArgument("test split must be non-empty");
  }
};

}  // namespace sprobe
