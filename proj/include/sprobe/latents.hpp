#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "sprobe/sae.hpp"

namespace sprobe {

/// Latent indices chosen by class-mean difference, with their statistic.
struct LatentSelection {
  Indices indices;
  std::vector<double> scores;

  std::size_t size() const { return indices.size(); }
};

/// |mean over positives - mean over negatives| for every column, accumulated in float64.
inline std::vector<double> mean_difference(const Matrix& z, const Labels& y) {
  if (static_cast<std::size_t>(z.rows()) != y.size()) throw DimensionMismatch("latent rows != target length");
  require_both_classes(y, "select_top_k");
  Vector sum1 = Vector::Zero(z.cols()), sum0 = Vector::Zero(z.cols());
  std::size_t n1 = 0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    if (y[static_cast<std::size_t>(r)]) {
      sum1 += z.row(r).transpose();
      ++n1;
    } else {
      sum0 += z.row(r).transpose();
    }
  }
  const auto n0 = y.size() - n1;
  std::vector<double> out(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index c = 0; c < z.cols(); ++c)
    out[static_cast<std::size_t>(c)] = std::abs(sum1[c] / static_cast<double>(n1) - sum0[c] / static_cast<double>(n0));
  return out;
}

/// The k columns with the largest class-mean gap, in descending order of the gap
/// (equal gaps ordered by lower index).
inline LatentSelection select_top_k(const Matrix& z, const Labels& y, std::size_t k) {
  if (k > static_cast<std::size_t>(z.cols()))
    throw InvalidArgument("k = " + std::to_string(k) + " exceeds width " + std::to_string(z.cols()));
  const auto stat = mean_difference(z, y);
  Indices order(stat.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) { return stat[a] > stat[b] || (stat[a] == stat[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  LatentSelection sel;
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  for (auto i : sel.indices) sel.scores.push_back(stat[i]);
  return sel;
}

inline LatentSelection select_top_k(const LatentMatrix& z, const Labels& y, std::size_t k) {
  return select_top_k(z.values, y, k);
}

/// Columns `sel.indices` of `z`, in selection order.
inline Matrix gather_columns(const Matrix& z, const Indices& cols) {
  Matrix out(z.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= static_cast<std::size_t>(z.cols())) throw DimensionMismatch("column index out of range");
    out.col(static_cast<Eigen::Index>(j)) = z.col(static_cast<Eigen::Index>(cols[j]));
  }
  return out;
}

enum class Pooling { Last, Mean, Max };

inline const char* to_string(Pooling p) {
  switch (p) {
    case Pooling::Last: return "last";
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
  }
  return "?";
}

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "last") return Pooling::Last;
  if (s == "mean") return Pooling::Mean;
  if (s == "max") return Pooling::Max;
  throw InvalidArgument("unknown pooling mode: " + s);
}

/// Pools per-token rows (row e * n_tokens + t) over the valid trailing tokens of each
/// example.
inline Matrix pool_token_rows(const Matrix& rows, std::size_t n_examples, std::size_t n_tokens,
                              const std::vector<std::uint32_t>& token_mask, Pooling mode) {
  if (static_cast<std::size_t>(rows.rows()) != n_examples * n_tokens || token_mask.size() != n_examples)
    throw DimensionMismatch("per-token rows do not match (n_examples, n_tokens)");
  Matrix out(static_cast<Eigen::Index>(n_examples), rows.cols());
  for (std::size_t e = 0; e < n_examples; ++e) {
    const std::size_t valid = token_mask[e];
    if (valid == 0 || valid > n_tokens) throw InvalidArgument("example " + std::to_string(e) + " has no valid tokens");
    const auto base = static_cast<Eigen::Index>(e * n_tokens);
    const auto first = static_cast<Eigen::Index>(n_tokens - valid);
    const auto last = static_cast<Eigen::Index>(n_tokens - 1);
    auto dst = out.row(static_cast<Eigen::Index>(e));
    switch (mode) {
      case Pooling::Last:
        dst = rows.row(base + last);
        break;
      case Pooling::Mean:
        dst = rows.middleRows(base + first, static_cast<Eigen::Index>(valid)).colwise().sum() / static_cast<double>(valid);
        break;
      case Pooling::Max:
        dst = rows.middleRows(base + first, static_cast<Eigen::Index>(valid)).colwise().maxCoeff();
        break;
    }
  }
  return out;
}

inline LatentMatrix pool_latents(const TokenLatents& z, Pooling mode) {
  return {pool_token_rows(z.values, z.n_examples, z.n_tokens, z.token_mask, mode), z.source};
}

/// 1 where value > threshold, else 0.
inline Matrix binarize(const Matrix& z, double threshold = 1.0) {
  return (z.array() > threshold).cast<double>().matrix();
}

inline LatentMatrix binarize(const LatentMatrix& z, double threshold = 1.0) {
  return {binarize(z.values, threshold), z.source};
}

/// Keeps the first `keep` selected latents under an externally supplied rank order.
/// `rank_order` lists latent ids (a permutation of `sel.indices`), best first.
inline LatentSelection prune_by_rank(const LatentSelection& sel, const Indices& rank_order, std::size_t keep) {
  if (keep == 0) throw InvalidArgument("keep must be >= 1");
  if (keep > sel.size()) throw InvalidArgument("keep exceeds selection size");
  if (rank_order.size() != sel.size()) throw InvalidArgument("rank order is not a permutation of the selection");
  std::unordered_map<std::size_t, double> score_of;
  for (std::size_t i = 0; i < sel.size(); ++i) score_of.emplace(sel.indices[i], sel.scores[i]);
  std::unordered_map<std::size_t, int> seen;
  for (auto id : rank_order)
    if (!score_of.contains(id) || seen[id]++) throw InvalidArgument("rank order is not a permutation of the selection");
  LatentSelection out;
  for (std::size_t i = 0; i < keep; ++i) {
    out.indices.push_back(rank_order[i]);
    out.scores.push_back(score_of.at(rank_order[i]));
  }
  return out;
}

}  // namespace sprobe
