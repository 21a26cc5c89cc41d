#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sprobe/tensor.hpp"

namespace sprobe {

enum class RegimeKind { Standard, Scarcity, Imbalance, LabelNoise, CovariateShift };

inline const char* to_string(RegimeKind k) {
  switch (k) {
    case RegimeKind::Standard: return "standard";
    case RegimeKind::Scarcity: return "scarcity";
    case RegimeKind::Imbalance: return "imbalance";
    case RegimeKind::LabelNoise: return "noise";
    case RegimeKind::CovariateShift: return "shift";
  }
  return "?";
}

inline RegimeKind regime_from_string(const std::string& s) {
  for (auto k : {RegimeKind::Standard, RegimeKind::Scarcity, RegimeKind::Imbalance, RegimeKind::LabelNoise,
                 RegimeKind::CovariateShift})
    if (s == to_string(k)) return k;
  throw InvalidArgument("unknown regime: " + s);
}

/// One point of a regime sweep. `value` is n (scarcity), ratio (imbalance) or fraction
/// (label noise); unused otherwise. `train_size` optionally fixes the imbalance total.
struct RegimeSpec {
  RegimeKind kind = RegimeKind::Standard;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;

  void validate() const {
    switch (kind) {
      case RegimeKind::Scarcity:
        if (value < 2 || value > 1024 || value != std::floor(value))
          throw InvalidArgument("scarcity n must be an integer in [2, 1024]");
        break;
      case RegimeKind::Imbalance:
        if (!(value >= 0.05 - 1e-12 && value <= 0.95 + 1e-12)) throw InvalidArgument("imbalance ratio must lie in [0.05, 0.95]");
        break;
      case RegimeKind::LabelNoise:
        if (!(value >= 0 && value <= 0.5 + 1e-12)) throw InvalidArgument("noise fraction must lie in [0, 0.5]");
        break;
      default: break;
    }
  }
};

/// 20 training-set sizes, geometrically spaced from 2 to 1024 and rounded; a value that
/// does not exceed its predecessor is bumped to predecessor + 1.
inline std::vector<std::size_t> scarcity_grid() {
  std::vector<std::size_t> out;
  for (int i = 0; i < 20; ++i) {
    auto v = static_cast<std::size_t>(std::llround(2.0 * std::pow(512.0, i / 19.0)));
    if (!out.empty() && v <= out.back()) v = out.back() + 1;
    out.push_back(v);
  }
  return out;
}

/// Positive-class ratios 0.05, 0.10, ..., 0.95.
inline std::vector<double> imbalance_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 19; ++i) out.push_back(i / 20.0);
  return out;
}

/// Corrupted-label fractions 0.0, 0.05, ..., 0.5.
inline std::vector<double> noise_grid() {
  std::vector<double> out;
  for (int i = 0; i <= 10; ++i) out.push_back(i / 20.0);
  return out;
}

/// Positions (into the training pool) whose labels are flipped: the first
/// floor(fraction * pool_size) entries of a seeded permutation.
inline Indices noise_flip_positions(std::size_t pool_size, double fraction, std::uint64_t seed) {
  Rng rng(seed);
  Indices perm = permutation(pool_size, rng);
  perm.resize(static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool_size) + 1e-9)));
  std::sort(perm.begin(), perm.end());
  return perm;
}

namespace detail {

inline void split_by_class(const Indices& idx, const Labels& y, Indices& pos, Indices& neg) {
  for (auto i : idx) (y[i] ? pos : neg).push_back(i);
}

// Seeded draw of `count` entries of `from` (order of `from` is irrelevant to the caller).
inline Indices draw(const Indices& from, std::size_t count, Rng& rng) {
  const Indices perm = permutation(from.size(), rng);
  Indices out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(from[perm[i]]);
  return out;
}

// Largest total N with round(ratio * N) <= pos and N - round(ratio * N) <= neg.
inline std::size_t max_total_for_ratio(double ratio, std::size_t pos, std::size_t neg) {
  auto feasible = [&](std::size_t n) {
    const auto n1 = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    return n1 <= pos && n - n1 <= neg;
  };
  std::size_t n = pos + neg;
  while (n > 0 && !feasible(n)) --n;
  return n;
}

}  // namespace detail

/// Applies a regime to a dataset. Training-pool transforms leave the test split alone
/// except where stated:
///  - Scarcity: class-balanced seeded subsample of the pool to n (odd n gives the extra
///    example to the negative class); validation is folded into train.
///  - Imbalance: pool resampled to round(ratio * N) positives out of N, N held fixed
///    across ratios (train_size, or the largest N feasible at ratio 0.95/0.05); the test
///    split is resampled to the same ratio.
///  - LabelNoise: floor(fraction * |pool|) labels flipped across train and validation.
///  - CovariateShift: test replaced by the OOD examples (at most 300, seeded).
inline LabeledDataset apply_regime(const LabeledDataset& data, const RegimeSpec& spec) {
  spec.validate();
  LabeledDataset out = data;
  Rng rng(spec.seed);
  const Indices pool = data.split.pool();
  switch (spec.kind) {
    case RegimeKind::Standard:
      return out;
    case RegimeKind::Scarcity: {
      const auto n = static_cast<std::size_t>(spec.value);
      if (n == pool.size()) return out;
      if (n > pool.size()) throw InfeasibleRegime("scarcity n exceeds the training pool");
      Indices pos, neg;
      detail::split_by_class(pool, data.targets, pos, neg);
      std::size_t n1 = n / 2, n0 = n - n1;
      if (n1 > pos.size()) { n0 += n1 - pos.size(); n1 = pos.size(); }
      if (n0 > neg.size()) { n1 += n0 - neg.size(); n0 = neg.size(); }
      Indices train = detail::draw(pos, n1, rng);
      const Indices negs = detail::draw(neg, n0, rng);
      train.insert(train.end(), negs.begin(), negs.end());
      std::sort(train.begin(), train.end());
      out.split.train = std::move(train);
      out.split.val.clear();
      return out;
    }
    case RegimeKind::Imbalance: {
      const double ratio = spec.value;
      Indices pos, neg;
      detail::split_by_class(pool, data.targets, pos, neg);
      std::size_t total = spec.train_size;
      if (total == 0) {
        total = std::min(detail::max_total_for_ratio(0.95, pos.size(), neg.size()),
                         detail::max_total_for_ratio(0.05, pos.size(), neg.size()));
      }
      const auto n1 = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
      const std::size_t n0 = total - n1;
      if (n1 > pos.size() || n0 > neg.size() || n1 == 0 || n0 == 0)
        throw InfeasibleRegime("imbalance ratio " + std::to_string(ratio) + " not realisable with " +
                               std::to_string(pos.size()) + " positives and " + std::to_string(neg.size()) + " negatives");
      Indices train = detail::draw(pos, n1, rng);
      const Indices negs = detail::draw(neg, n0, rng);
      train.insert(train.end(), negs.begin(), negs.end());
      std::sort(train.begin(), train.end());
      Indices tpos, tneg;
      detail::split_by_class(data.split.test, data.targets, tpos, tneg);
      const std::size_t t_total = detail::max_total_for_ratio(ratio, tpos.size(), tneg.size());
      const auto t1 = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(t_total)));
      if (t1 == 0 || t_total - t1 == 0) throw InfeasibleRegime("imbalance ratio not realisable on the test split");
      Indices test = detail::draw(tpos, t1, rng);
      const Indices tnegs = detail::draw(tneg, t_total - t1, rng);
      test.insert(test.end(), tnegs.begin(), tnegs.end());
      std::sort(test.begin(), test.end());
      out.split.train = std::move(train);
      out.split.val.clear();
      out.split.test = std::move(test);
      return out;
    }
    case RegimeKind::LabelNoise: {
      for (auto p : noise_flip_positions(pool.size(), spec.value, spec.seed)) {
        auto& t = out.targets[pool[p]];
        t = 1 - t;
      }
      return out;
    }
    case RegimeKind::CovariateShift: {
      if (!data.ood) throw InfeasibleRegime("covariate shift requires an OOD evaluation set");
      const auto& ood = *data.ood;
      Indices chosen(ood.size());
      for (std::size_t i = 0; i < ood.size(); ++i) chosen[i] = i;
      if (chosen.size() > 300) {
        chosen = detail::draw(chosen, 300, rng);
        std::sort(chosen.begin(), chosen.end());
      }
      const std::size_t base = data.size();
      out.features = concat_examples(data.features, ood.features.select(chosen));
      for (auto i : chosen) out.targets.push_back(ood.targets[i]);
      out.split.test.clear();
      for (std::size_t i = 0; i < chosen.size(); ++i) out.split.test.push_back(base + i);
      if (!data.token_ids.empty()) {
        if (ood.token_ids.empty()) out.token_ids.clear();
        else
          for (auto i : chosen)
            for (std::size_t t = 0; t < ood.features.n_tokens; ++t) out.token_ids.push_back(ood.token_ids[i * ood.features.n_tokens + t]);
      }
      out.ood.reset();
      return out;
    }
  }
  return out;
}

}  // namespace sprobe
