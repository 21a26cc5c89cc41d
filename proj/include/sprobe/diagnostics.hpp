#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sprobe/multitoken.hpp"
#include "sprobe/probes/probe.hpp"

namespace sprobe {

/// Model probability of target = 1. KNN scores are already neighbour fractions; every
/// other family scores a logit.
inline Vector probability(const ProbeModel& model, const Matrix& x) {
  Vector s = score(model, x);
  if (family_of(model) != Family::KNN) s = s.unaryExpr([](double v) { return sigmoid(v); });
  return s;
}

struct Disagreement {
  std::size_t index;  // row in the scored feature matrix
  double score;       // raw model score
  int label;
  double confidence;  // model probability of the class opposite to `label`
};

struct DisagreementReport {
  std::vector<Disagreement> rows;
  std::vector<std::string> warnings;
};

/// Examples ranked by the model's confidence in the class opposite to the recorded
/// label (ties by lower index), keeping those strictly above `min_confidence` (no
/// threshold by default), at most top_n.
inline DisagreementReport mine_disagreements(const ProbeModel& model, const Matrix& x, const Labels& y,
                                             std::size_t top_n,
                                             double min_confidence = -std::numeric_limits<double>::infinity()) {
  if (top_n < 1) throw InvalidArgument("mine_disagreements: top_n must be >= 1");
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DimensionMismatch("mine_disagreements: rows != labels");
  DisagreementReport rep;
  if (top_n > y.size()) {
    rep.warnings.push_back("top_n " + std::to_string(top_n) + " clamped to " + std::to_string(y.size()));
    top_n = y.size();
  }
  const Vector s = score(model, x);
  const Vector p = probability(model, x);
  std::vector<Disagreement> all;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    all.push_back({i, s[r], y[i], y[i] ? 1.0 - p[r] : p[r]});
  }
  std::sort(all.begin(), all.end(), [](const Disagreement& a, const Disagreement& b) {
    return a.confidence > b.confidence || (a.confidence == b.confidence && a.index < b.index);
  });
  for (const auto& d : all) {
    if (rep.rows.size() == top_n) break;
    if (d.confidence > min_confidence) rep.rows.push_back(d);
  }
  return rep;
}

struct TokenActivation {
  std::int64_t token_id;
  double mean_activation;
  std::size_t occurrences;
};

/// Mean linear-probe score per token id over every valid token of a stream, keeping ids
/// seen at least `min_occurrences` times, sorted by mean descending (ties by id).
/// `token_ids` has one entry per (example, token) position.
inline std::vector<TokenActivation> top_activating_tokens(const ProbeModel& model, const ActivationTensor& stream,
                                                          const std::vector<std::int64_t>& token_ids,
                                                          std::size_t min_occurrences = 10) {
  const auto fam = family_of(model);
  if (fam != Family::LogReg && fam != Family::PCAReg)
    throw InvalidArgument(std::string("top_activating_tokens: non-linear model family ") + to_string(fam));
  if (token_ids.size() != stream.n_examples * stream.n_tokens) throw DimensionMismatch("token id count != token positions");
  const Vector s = score(model, token_rows(stream));
  std::map<std::int64_t, std::pair<double, std::size_t>> acc;
  for (std::size_t e = 0; e < stream.n_examples; ++e)
    for (std::size_t t = stream.first_valid(e); t < stream.n_tokens; ++t) {
      const auto pos = e * stream.n_tokens + t;
      auto& a = acc[token_ids[pos]];
      a.first += s[static_cast<Eigen::Index>(pos)];
      ++a.second;
    }
  std::vector<TokenActivation> out;
  for (const auto& [id, a] : acc)
    if (a.second >= min_occurrences) out.push_back({id, a.first / static_cast<double>(a.second), a.second});
  std::stable_sort(out.begin(), out.end(), [](const TokenActivation& a, const TokenActivation& b) {
    return a.mean_activation > b.mean_activation;
  });
  return out;
}

inline void write_token_table_csv(const std::vector<TokenActivation>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out.precision(17);
  out << "token_id,mean_activation,occurrences\n";
  for (const auto& r : rows) out << r.token_id << ',' << r.mean_activation << ',' << r.occurrences << '\n';
}

inline void write_disagreements_csv(const std::vector<Disagreement>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out.precision(17);
  out << "index,score,label,confidence\n";
  for (const auto& r : rows) out << r.index << ',' << r.score << ',' << r.label << ',' << r.confidence << '\n';
}

}  // namespace sprobe
