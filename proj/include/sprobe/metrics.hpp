#pragma once

#include <algorithm>
#include <numeric>
#include <span>

#include "sprobe/common.hpp"

namespace sprobe {

/// ROC AUC in Mann-Whitney form: average ranks over tied scores, so a tied
/// (positive, negative) pair contributes one half.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int v : labels) {
    if (v != 0 && v != 1) throw InvalidArgument("auc: labels must be 0 or 1");
    n_pos += v == 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw SingleClassError("auc: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; twice the average rank of a tie block [i, j) is i + 1 + j.
  long double rank_sum_pos2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    std::size_t pos_in_block = 0;
    for (std::size_t k = i; k < j; ++k) pos_in_block += labels[order[k]] == 1;
    rank_sum_pos2 += static_cast<long double>(pos_in_block) * static_cast<long double>(i + 1 + j);
    i = j;
  }
  const long double u2 = rank_sum_pos2 - static_cast<long double>(n_pos) * (n_pos + 1);
  return static_cast<double>(u2 / (2.0L * n_pos * n_neg));
}

inline double auc(const Vector& scores, const Labels& labels) {
  return auc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), labels);
}

}  // namespace sprobe
