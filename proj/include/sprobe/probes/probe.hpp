#pragma once

#include <cmath>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sprobe/probes/gbt.hpp"
#include "sprobe/probes/knn.hpp"
#include "sprobe/probes/logreg.hpp"
#include "sprobe/probes/mlp.hpp"
#include "sprobe/probes/pca.hpp"

namespace sprobe {

enum class Family { LogReg, PCAReg, KNN, GBT, MLP };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::LogReg: return "logreg";
    case Family::PCAReg: return "pca";
    case Family::KNN: return "knn";
    case Family::GBT: return "gbt";
    case Family::MLP: return "mlp";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  if (s == "logreg") return Family::LogReg;
  if (s == "pca") return Family::PCAReg;
  if (s == "knn") return Family::KNN;
  if (s == "gbt") return Family::GBT;
  if (s == "mlp") return Family::MLP;
  throw InvalidArgument("unknown probe family: " + s);
}

struct LogRegHp {
  Penalty penalty = Penalty::L2;
  double c = 1.0;
};
struct PcaHp {
  std::size_t n_components = 1;
};
struct KnnHp {
  std::size_t n_neighbors = 1;
};

using Hyperparams = std::variant<LogRegHp, PcaHp, KnnHp, GbtParams, MlpParams>;
using ProbeModel = std::variant<LogRegModel, PcaRegModel, KnnModel, GbtModel, MlpModel>;

inline Family family_of(const Hyperparams& h) { return static_cast<Family>(h.index()); }
inline Family family_of(const ProbeModel& m) { return static_cast<Family>(m.index()); }

inline ProbeModel train_probe(const Hyperparams& hp, const Matrix& x, const Labels& y) {
  return std::visit(
      [&](const auto& h) -> ProbeModel {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, LogRegHp>) return train_logreg(x, y, h.penalty, h.c);
        else if constexpr (std::is_same_v<H, PcaHp>) return train_pca_reg(x, y, h.n_components);
        else if constexpr (std::is_same_v<H, KnnHp>) return train_knn(x, y, h.n_neighbors);
        else if constexpr (std::is_same_v<H, GbtParams>) return train_gbt(x, y, h);
        else return train_mlp(x, y, h);
      },
      hp);
}

/// Real-valued scores, higher meaning more likely target = 1.
inline Vector score(const ProbeModel& model, const Matrix& x) {
  return std::visit([&](const auto& m) { return m.decision(x); }, model);
}

// ---------------------------------------------------------------------------
// Hyperparameter grids: ten candidates per family.

/// 10 log-spaced integers from 1 to cap, deduplicated (fewer when cap < 10).
/// The hyperparameters a trained model was fitted with.
inline Hyperparams hyperparameters_of(const ProbeModel& model) {
  return std::visit(
      [](const auto& m) -> Hyperparams {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LogRegModel>) return LogRegHp{m.penalty, m.c};
        else if constexpr (std::is_same_v<M, PcaRegModel>) return PcaHp{static_cast<std::size_t>(m.pca.components.cols())};
        else if constexpr (std::is_same_v<M, KnnModel>) return KnnHp{m.k};
        else return m.params;
      },
      model);
}

inline std::vector<std::size_t> log_spaced_counts(std::size_t cap) {
  std::set<std::size_t> values;
  for (int i = 0; i < 10; ++i) {
    const double v = std::pow(static_cast<double>(cap), i / 9.0);
    values.insert(std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(v)), 1, std::max<std::size_t>(cap, 1)));
  }
  return {values.begin(), values.end()};
}

/// C from 1e5 down to 1e-5, log-spaced.
inline std::vector<Hyperparams> logreg_grid(Penalty penalty) {
  std::vector<Hyperparams> g;
  for (int i = 0; i < 10; ++i) g.push_back(LogRegHp{penalty, std::pow(10.0, 5.0 - 10.0 * i / 9.0)});
  return g;
}

/// Components from 1 to min(n_samples, n_features, 100), log-spaced.
inline std::vector<Hyperparams> pca_grid(std::size_t n_samples, std::size_t n_features) {
  std::vector<Hyperparams> g;
  for (auto k : log_spaced_counts(pca_component_cap(n_samples, n_features))) g.push_back(PcaHp{k});
  return g;
}

/// Neighbours from 1 to min(100, n_samples - 1), log-spaced.
inline std::vector<Hyperparams> knn_grid(std::size_t n_samples) {
  std::vector<Hyperparams> g;
  const std::size_t cap = std::min<std::size_t>(100, n_samples > 1 ? n_samples - 1 : 1);
  for (auto k : log_spaced_counts(cap)) g.push_back(KnnHp{k});
  return g;
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

/// Ten random draws from the boosted-tree ranges.
inline std::vector<Hyperparams> gbt_grid(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Hyperparams> g;
  for (int i = 0; i < 10; ++i) {
    GbtParams p;
    p.n_estimators = 50 * std::uniform_int_distribution<std::size_t>(1, 5)(rng);
    p.max_depth = std::uniform_int_distribution<std::size_t>(2, 5)(rng);
    p.learning_rate = log_uniform(rng, 1e-3, 0.1);
    p.subsample = std::uniform_real_distribution<double>(0.7, 1.0)(rng);
    p.colsample_bytree = std::uniform_real_distribution<double>(0.7, 1.0)(rng);
    p.reg_alpha = log_uniform(rng, 1e-3, 10.0);
    p.reg_lambda = log_uniform(rng, 1e-3, 10.0);
    p.min_child_weight = static_cast<double>(std::uniform_int_distribution<int>(1, 9)(rng));
    p.seed = rng();
    g.push_back(p);
  }
  return g;
}

/// Ten random draws over depth {1,2,3}, width {16,32,64}, five log-spaced learning
/// rates in [1e-4, 1e-2] and five log-spaced weight decays in [1e-5, 1e-2].
inline std::vector<Hyperparams> mlp_grid(std::uint64_t seed) {
  Rng rng(seed);
  const double lrs[] = {1e-4, std::pow(10.0, -3.5), 1e-3, std::pow(10.0, -2.5), 1e-2};
  const double wds[] = {1e-5, std::pow(10.0, -4.25), std::pow(10.0, -3.5), std::pow(10.0, -2.75), 1e-2};
  const std::size_t widths[] = {16, 32, 64};
  std::vector<Hyperparams> g;
  for (int i = 0; i < 10; ++i) {
    MlpParams p;
    p.depth = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    p.width = widths[std::uniform_int_distribution<int>(0, 2)(rng)];
    p.learning_rate = lrs[std::uniform_int_distribution<int>(0, 4)(rng)];
    p.weight_decay = wds[std::uniform_int_distribution<int>(0, 4)(rng)];
    p.seed = rng();
    g.push_back(p);
  }
  return g;
}

/// The grid for a family. `min_train` is the smallest training-fold size the candidates
/// will see; data-dependent caps are clamped to it.
inline std::vector<Hyperparams> default_grid(Family f, Penalty logreg_penalty, std::size_t min_train,
                                             std::size_t n_features, std::uint64_t seed) {
  switch (f) {
    case Family::LogReg: return logreg_grid(logreg_penalty);
    case Family::PCAReg: return pca_grid(min_train, n_features);
    case Family::KNN: return knn_grid(min_train);
    case Family::GBT: return gbt_grid(seed);
    case Family::MLP: return mlp_grid(seed);
  }
  return {};
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Hyperparams& hp) {
  return std::visit(
      [](const auto& h) -> nlohmann::json {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, LogRegHp>) return {{"penalty", to_string(h.penalty)}, {"c", h.c}};
        else if constexpr (std::is_same_v<H, PcaHp>) return {{"n_components", h.n_components}};
        else if constexpr (std::is_same_v<H, KnnHp>) return {{"n_neighbors", h.n_neighbors}};
        else if constexpr (std::is_same_v<H, GbtParams>)
          return {{"n_estimators", h.n_estimators}, {"max_depth", h.max_depth},
                  {"learning_rate", h.learning_rate}, {"subsample", h.subsample},
                  {"colsample_bytree", h.colsample_bytree}, {"reg_alpha", h.reg_alpha},
                  {"reg_lambda", h.reg_lambda}, {"min_child_weight", h.min_child_weight}, {"seed", h.seed}};
        else
          return {{"depth", h.depth}, {"width", h.width}, {"learning_rate", h.learning_rate},
                  {"weight_decay", h.weight_decay}, {"max_epochs", h.max_epochs},
                  {"patience", h.patience}, {"seed", h.seed}};
      },
      hp);
}

/// Compact, stable text form used inside method ids.
inline std::string hp_string(const Hyperparams& hp) { return to_json(hp).dump(); }

namespace detail {

inline std::string pack(const Vector& v) {
  return encode_doubles(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}
inline std::string pack(const Matrix& m) {
  return encode_doubles(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}
inline Vector unpack_vector(const nlohmann::json& j) {
  const auto d = decode_doubles(j.get<std::string>());
  return Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
}
inline Matrix unpack_matrix(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto d = decode_doubles(j.get<std::string>());
  if (static_cast<Eigen::Index>(d.size()) != rows * cols) throw FormatError("matrix payload size mismatch");
  return Eigen::Map<const Matrix>(d.data(), rows, cols);
}
inline nlohmann::json std_json(const Standardizer& s) { return {{"mean", pack(s.mean)}, {"scale", pack(s.scale)}}; }
inline Standardizer std_from(const nlohmann::json& j) { return {unpack_vector(j.at("mean")), unpack_vector(j.at("scale"))}; }

inline nlohmann::json logreg_json(const LogRegModel& m) {
  return {{"standardizer", std_json(m.standardizer)}, {"w", pack(m.w)}, {"b", m.b},
          {"penalty", to_string(m.penalty)}, {"c", std::isfinite(m.c) ? nlohmann::json(m.c) : nlohmann::json("inf")},
          {"iterations", m.iterations}, {"converged", m.converged}};
}
inline LogRegModel logreg_from(const nlohmann::json& j) {
  LogRegModel m;
  m.standardizer = std_from(j.at("standardizer"));
  m.w = unpack_vector(j.at("w"));
  m.b = j.at("b").get<double>();
  m.penalty = j.at("penalty").get<std::string>() == "l1" ? Penalty::L1 : Penalty::L2;
  m.c = j.at("c").is_string() ? std::numeric_limits<double>::infinity() : j.at("c").get<double>();
  m.iterations = j.value("iterations", 0);
  m.converged = j.value("converged", false);
  return m;
}

}  // namespace detail

/// Serialises a trained model: family tag, hyperparameters and base64 float64 arrays.
inline nlohmann::json model_to_json(const ProbeModel& model) {
  using detail::pack;
  nlohmann::json j;
  j["family"] = to_string(family_of(model));
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LogRegModel>) {
          j["hyperparams"] = to_json(Hyperparams{LogRegHp{m.penalty, m.c}});
          j["params"] = detail::logreg_json(m);
        } else if constexpr (std::is_same_v<M, PcaRegModel>) {
          j["hyperparams"] = to_json(Hyperparams{PcaHp{static_cast<std::size_t>(m.pca.components.cols())}});
          j["params"] = {{"standardizer", detail::std_json(m.standardizer)},
                         {"pca_mean", pack(m.pca.mean)},
                         {"components", pack(m.pca.components)},
                         {"rows", m.pca.components.rows()},
                         {"cols", m.pca.components.cols()},
                         {"variances", pack(m.pca.variances)},
                         {"head", detail::logreg_json(m.head)}};
        } else if constexpr (std::is_same_v<M, KnnModel>) {
          j["hyperparams"] = to_json(Hyperparams{KnnHp{m.k}});
          j["params"] = {{"standardizer", detail::std_json(m.standardizer)},
                         {"train", pack(m.train)},
                         {"rows", m.train.rows()},
                         {"cols", m.train.cols()},
                         {"labels", m.labels}};
        } else if constexpr (std::is_same_v<M, GbtModel>) {
          j["hyperparams"] = to_json(Hyperparams{m.params});
          nlohmann::json trees = nlohmann::json::array();
          for (const auto& t : m.trees) {
            std::vector<int> feat, left, right;
            std::vector<double> thr, val;
            for (const auto& n : t.nodes) {
              feat.push_back(n.feature);
              left.push_back(n.left);
              right.push_back(n.right);
              thr.push_back(n.threshold);
              val.push_back(n.value);
            }
            trees.push_back({{"feature", feat}, {"left", left}, {"right", right},
                             {"threshold", encode_doubles(thr)}, {"value", encode_doubles(val)}});
          }
          j["params"] = {{"base_score", m.base_score}, {"n_features", m.n_features}, {"trees", trees}};
        } else {
          j["hyperparams"] = to_json(Hyperparams{m.params});
          j["params"] = {{"standardizer", detail::std_json(m.standardizer)},
                         {"sizes", m.net.sizes},
                         {"weights", pack(m.net.params)}};
        }
      },
      model);
  return j;
}

inline Hyperparams hyperparams_from_json(Family f, const nlohmann::json& h) {
  switch (f) {
    case Family::LogReg:
      return LogRegHp{h.at("penalty").get<std::string>() == "l1" ? Penalty::L1 : Penalty::L2,
                      h.at("c").is_string() ? std::numeric_limits<double>::infinity() : h.at("c").get<double>()};
    case Family::PCAReg: return PcaHp{h.at("n_components").get<std::size_t>()};
    case Family::KNN: return KnnHp{h.at("n_neighbors").get<std::size_t>()};
    case Family::GBT: {
      GbtParams p;
      p.n_estimators = h.at("n_estimators");
      p.max_depth = h.at("max_depth");
      p.learning_rate = h.at("learning_rate");
      p.subsample = h.at("subsample");
      p.colsample_bytree = h.at("colsample_bytree");
      p.reg_alpha = h.at("reg_alpha");
      p.reg_lambda = h.at("reg_lambda");
      p.min_child_weight = h.at("min_child_weight");
      p.seed = h.at("seed");
      return p;
    }
    case Family::MLP: {
      MlpParams p;
      p.depth = h.at("depth");
      p.width = h.at("width");
      p.learning_rate = h.at("learning_rate");
      p.weight_decay = h.at("weight_decay");
      p.max_epochs = h.at("max_epochs");
      p.patience = h.at("patience");
      p.seed = h.at("seed");
      return p;
    }
  }
  throw InvalidArgument("unknown family");
}

inline ProbeModel model_from_json(const nlohmann::json& j) {
  using detail::unpack_matrix;
  using detail::unpack_vector;
  try {
    Family f;
    try {
      f = family_from_string(j.at("family").get<std::string>());
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("model json: ") + e.what());
    }
    const auto& p = j.at("params");
    switch (f) {
      case Family::LogReg: return detail::logreg_from(p);
      case Family::PCAReg: {
        PcaRegModel m;
        m.standardizer = detail::std_from(p.at("standardizer"));
        m.pca.mean = unpack_vector(p.at("pca_mean"));
        m.pca.components = unpack_matrix(p.at("components"), p.at("rows"), p.at("cols"));
        m.pca.variances = unpack_vector(p.at("variances"));
        m.head = detail::logreg_from(p.at("head"));
        return m;
      }
      case Family::KNN: {
        KnnModel m;
        m.standardizer = detail::std_from(p.at("standardizer"));
        m.train = unpack_matrix(p.at("train"), p.at("rows"), p.at("cols"));
        m.labels = p.at("labels").get<Labels>();
        m.k = std::get<KnnHp>(hyperparams_from_json(f, j.at("hyperparams"))).n_neighbors;
        return m;
      }
      case Family::GBT: {
        GbtModel m;
        m.params = std::get<GbtParams>(hyperparams_from_json(f, j.at("hyperparams")));
        m.base_score = p.at("base_score");
        m.n_features = p.at("n_features");
        for (const auto& t : p.at("trees")) {
          RegressionTree tree;
          const auto feat = t.at("feature").get<std::vector<int>>();
          const auto left = t.at("left").get<std::vector<int>>();
          const auto right = t.at("right").get<std::vector<int>>();
          const auto thr = decode_doubles(t.at("threshold").get<std::string>());
          const auto val = decode_doubles(t.at("value").get<std::string>());
          if (left.size() != feat.size() || right.size() != feat.size() || thr.size() != feat.size() || val.size() != feat.size())
            throw FormatError("gbt tree arrays differ in length");
          for (std::size_t i = 0; i < feat.size(); ++i) tree.nodes.push_back({feat[i], thr[i], left[i], right[i], val[i]});
          m.trees.push_back(std::move(tree));
        }
        return m;
      }
      case Family::MLP: {
        MlpModel m;
        m.params = std::get<MlpParams>(hyperparams_from_json(f, j.at("hyperparams")));
        m.standardizer = detail::std_from(p.at("standardizer"));
        m.net.sizes = p.at("sizes").get<std::vector<std::size_t>>();
        m.net.params = unpack_vector(p.at("weights"));
        if (static_cast<std::size_t>(m.net.params.size()) != m.net.param_count()) throw FormatError("mlp weight count mismatch");
        return m;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model json: ") + e.what());
  }
  throw FormatError("model json: unknown family");
}

}  // namespace sprobe
