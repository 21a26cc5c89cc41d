#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sprobe/metrics.hpp"

namespace sprobe {

enum class CVKind { TrainOnAll, LeaveTwoOut, SixFold, HoldOut20 };

inline const char* to_string(CVKind k) {
  switch (k) {
    case CVKind::TrainOnAll: return "train_on_all";
    case CVKind::LeaveTwoOut: return "leave_two_out";
    case CVKind::SixFold: return "six_fold";
    case CVKind::HoldOut20: return "holdout_20";
  }
  return "?";
}

/// Validation scheme chosen by training-pool size:
/// n <= 3 train on all, n <= 12 leave-two-out, n <= 128 six folds, else 80/20.
inline CVKind cv_kind_for(std::size_t n) {
  if (n <= 3) return CVKind::TrainOnAll;
  if (n <= 12) return CVKind::LeaveTwoOut;
  if (n <= 128) return CVKind::SixFold;
  return CVKind::HoldOut20;
}

struct Fold {
  Indices train;
  Indices val;
};

/// Fold positions index into the training pool (0..n-1).
struct CVPlan {
  CVKind kind = CVKind::TrainOnAll;
  std::vector<Fold> folds;
};

namespace detail {

// Seeded order of 0..n-1. With labels, positives (shuffled) come first, then negatives
// (shuffled), so dealing positions round-robin stratifies by class.
inline Indices cv_order(std::size_t n, std::uint64_t seed, const Labels* labels) {
  Rng rng(seed);
  const Indices perm = permutation(n, rng);
  if (!labels) return perm;
  Indices out;
  out.reserve(n);
  for (int cls : {1, 0})
    for (auto i : perm)
      if ((*labels)[i] == cls) out.push_back(i);
  return out;
}

}  // namespace detail

/// Builds the validation plan for a training pool of size n. When labels are given,
/// six-fold and hold-out splits are class-stratified.
inline CVPlan make_cv_plan(std::size_t n, std::uint64_t seed, const Labels* labels = nullptr) {
  if (n < 2) throw InvalidArgument("cross-validation needs n >= 2");
  if (labels && labels->size() != n) throw DimensionMismatch("labels length != n");
  CVPlan plan;
  plan.kind = cv_kind_for(n);
  Indices all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  switch (plan.kind) {
    case CVKind::TrainOnAll:
      plan.folds.push_back({all, all});
      break;
    case CVKind::LeaveTwoOut:
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
          Fold f;
          for (auto i : all)
            if (i != a && i != b) f.train.push_back(i);
          f.val = {a, b};
          plan.folds.push_back(std::move(f));
        }
      break;
    case CVKind::SixFold: {
      const Indices order = detail::cv_order(n, seed, labels);
      std::vector<Indices> parts(6);
      for (std::size_t p = 0; p < n; ++p) parts[p % 6].push_back(order[p]);
      for (auto& part : parts) std::sort(part.begin(), part.end());
      for (std::size_t f = 0; f < 6; ++f) {
        Fold fold;
        fold.val = parts[f];
        for (std::size_t g = 0; g < 6; ++g)
          if (g != f) fold.train.insert(fold.train.end(), parts[g].begin(), parts[g].end());
        std::sort(fold.train.begin(), fold.train.end());
        plan.folds.push_back(std::move(fold));
      }
      break;
    }
    case CVKind::HoldOut20: {
      const Indices order = detail::cv_order(n, seed, labels);
      // Every fifth position of the (stratified) order goes to validation.
      Fold fold;
      for (std::size_t p = 0; p < n; ++p) (p % 5 == 4 ? fold.val : fold.train).push_back(order[p]);
      std::sort(fold.train.begin(), fold.train.end());
      std::sort(fold.val.begin(), fold.val.end());
      plan.folds.push_back(std::move(fold));
      break;
    }
  }
  return plan;
}

/// Outcome of model selection for one candidate list.
struct Selection {
  std::size_t best = 0;
  double auc_val = 0.0;
  std::vector<std::optional<double>> candidate_auc;  // nullopt = no usable fold
  std::vector<std::string> warnings;
};

/// No candidate could be evaluated on any fold.
class SelectionError : public Error {
 public:
  SelectionError(const std::string& msg, std::vector<std::string> causes)
      : Error(msg), causes(std::move(causes)) {}
  std::vector<std::string> causes;
};

/// `fit_score(candidate, train_positions, val_positions)` trains candidate `c` on the
/// training positions of the pool and returns scores for the validation positions.
using FitScoreFn = std::function<Vector(std::size_t candidate, const Indices& train, const Indices& val)>;

/// Mean validation AUC per candidate over the plan's folds; returns the argmax
/// (earliest candidate wins ties). Folds whose validation part is single-class, or
/// whose training part fails to train, are skipped with a warning.
inline Selection select_hyperparams(std::size_t n_candidates, const Labels& pool_labels, const CVPlan& plan,
                                    const FitScoreFn& fit_score) {
  if (n_candidates == 0) throw InvalidArgument("hyperparameter grid is empty");
  Selection sel;
  sel.candidate_auc.assign(n_candidates, std::nullopt);
  std::vector<std::string> causes(n_candidates);
  std::size_t single_class_val = 0;
  for (const auto& fold : plan.folds) {
    const auto pos = count_positive(labels_at(pool_labels, fold.val));
    if (pos == 0 || pos == fold.val.size()) ++single_class_val;
  }
  if (single_class_val > 0)
    sel.warnings.push_back(std::to_string(single_class_val) + " of " + std::to_string(plan.folds.size()) +
                           " folds have single-class validation data and were skipped");
  for (std::size_t c = 0; c < n_candidates; ++c) {
    double sum = 0;
    std::size_t used = 0;
    for (const auto& fold : plan.folds) {
      const Labels yv = labels_at(pool_labels, fold.val);
      const auto pos = count_positive(yv);
      if (pos == 0 || pos == yv.size()) continue;
      try {
        const Vector s = fit_score(c, fold.train, fold.val);
        sum += auc(s, yv);
        ++used;
      } catch (const Error& e) {
        causes[c] = e.what();
      }
    }
    if (used > 0) sel.candidate_auc[c] = sum / static_cast<double>(used);
    else if (causes[c].empty()) causes[c] = "no fold with both classes in validation";
  }
  bool found = false;
  for (std::size_t c = 0; c < n_candidates; ++c) {
    if (sel.candidate_auc[c] && (!found || *sel.candidate_auc[c] > sel.auc_val)) {
      sel.best = c;
      sel.auc_val = *sel.candidate_auc[c];
      found = true;
    }
  }
  if (!found) throw SelectionError("all hyperparameter candidates failed", std::move(causes));
  return sel;
}

}  // namespace sprobe
