#pragma once

#include <string>
#include <vector>

#include "sprobe/error.hpp"

namespace sprobe {

/// Identity of a probing method, independent of the hyperparameters chosen for it.
struct MethodId {
  std::string family;                    // logreg, pca, knn, gbt, mlp, attn
  std::string features = "activations";  // "activations" or an SAE id
  std::string pooling = "last";
  bool is_sae = false;
  std::size_t k = 0;      // selected latents (SAE probes)
  std::size_t width = 0;  // SAE width (SAE probes)
  double l0 = 0.0;
  bool binarized = false;

  std::string str() const {
    std::string s = family + "|" + features + "|" + pooling;
    if (is_sae) s += "|k=" + std::to_string(k);
    if (binarized) s += "|bin";
    return s;
  }
};

/// One evaluated (dataset, regime point, method).
struct EvalRecord {
  std::string dataset_id;
  std::string regime = "standard";
  double param = 0.0;
  MethodId method;
  std::string hyperparams;  // chosen h_p, JSON text
  double auc_val = 0.0;
  double auc_test = 0.0;
  std::uint64_t seed = 0;
  std::string manifest_hash;
  std::string task_key;
};

struct QuiverResult {
  std::size_t chosen = 0;  // index into records
  double auc_test = 0.0;
  bool tie_break_applied = false;
  std::vector<EvalRecord> records;

  const EvalRecord& chosen_record() const { return records[chosen]; }
};

/// Picks the record with maximal validation AUC and reports its test AUC. Among records
/// tied at the maximum, SAE probes win over baselines, then the smallest SAE width, then
/// the largest k, then the earliest record.
inline QuiverResult quiver_select(std::vector<EvalRecord> records) {
  if (records.empty()) throw InvalidArgument("quiver_select: no records");
  double best = records[0].auc_val;
  for (const auto& r : records) best = std::max(best, r.auc_val);
  std::size_t chosen = records.size();
  std::size_t tied = 0;
  auto prefer = [](const EvalRecord& a, const EvalRecord& b) {
    if (a.method.is_sae != b.method.is_sae) return a.method.is_sae;
    if (a.method.is_sae) {
      if (a.method.width != b.method.width) return a.method.width < b.method.width;
      if (a.method.k != b.method.k) return a.method.k > b.method.k;
    }
    return false;
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].auc_val != best) continue;
    ++tied;
    if (chosen == records.size() || prefer(records[i], records[chosen])) chosen = i;
  }
  QuiverResult out;
  out.chosen = chosen;
  out.auc_test = records[chosen].auc_test;
  out.tie_break_applied = tied > 1;
  out.records = std::move(records);
  return out;
}

/// Test-AUC difference a - b between two methods on the same dataset and regime point.
inline double head_to_head(const EvalRecord& a, const EvalRecord& b) {
  if (a.dataset_id != b.dataset_id || a.regime != b.regime || a.param != b.param)
    throw InvalidArgument("head_to_head: records come from different datasets or regimes");
  return a.auc_test - b.auc_test;
}

}  // namespace sprobe
