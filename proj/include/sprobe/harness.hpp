#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sprobe/csv.hpp"
#include "sprobe/cv.hpp"
#include "sprobe/latents.hpp"
#include "sprobe/multitoken.hpp"
#include "sprobe/probes/probe.hpp"
#include "sprobe/quiver.hpp"
#include "sprobe/regimes.hpp"
#include "sprobe/sae.hpp"
#include "sprobe/tensor_io.hpp"

namespace sprobe {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

struct SaeEntry {
  std::string id;
  std::string path;
  std::size_t width = 0;
  double l0 = 0.0;
};

/// One roster line; expands to one method per k for SAE features.
struct MethodSpec {
  std::string family;                    // logreg, pca, knn, gbt, mlp, attn
  std::string features = "activations";  // activations, concat_pca, or sae:<id>
  std::string pooling = "last";
  std::vector<std::size_t> k;
  bool binarize = false;
};

struct RegimeAxis {
  RegimeKind kind = RegimeKind::Standard;
  std::vector<double> values;
};

struct ExperimentManifest {
  std::vector<DatasetManifest> datasets;
  std::vector<SaeEntry> saes;
  std::vector<MethodSpec> methods;
  std::vector<RegimeAxis> regimes;
  std::uint64_t seed = 0;
  std::string output_dir = "results";
  std::size_t workers = 1;
  nlohmann::json source;  // as read, for hashing

  std::string hash() const { return content_hash(source.dump()); }

  const SaeEntry& sae(const std::string& id) const {
    for (const auto& s : saes)
      if (s.id == id) return s;
    throw InvalidArgument("unknown SAE id: " + id);
  }
};

inline const std::vector<std::size_t>& default_k_values() {
  static const std::vector<std::size_t> k{1, 16, 128};
  return k;
}

inline bool is_sae_source(const std::string& features) { return features.rfind("sae:", 0) == 0; }

inline std::vector<double> default_regime_values(RegimeKind kind) {
  switch (kind) {
    case RegimeKind::Scarcity: {
      std::vector<double> v;
      for (auto n : scarcity_grid()) v.push_back(static_cast<double>(n));
      return v;
    }
    case RegimeKind::Imbalance: return imbalance_grid();
    case RegimeKind::LabelNoise: return noise_grid();
    default: return {0.0};
  }
}

/// Every referenced path must exist; the roster must be non-empty. Throws InvalidArgument
/// or IoError, which abort a run.
inline void validate(const ExperimentManifest& m) {
  if (m.datasets.empty()) throw InvalidArgument("manifest: no datasets");
  if (m.methods.empty()) throw InvalidArgument("manifest: method roster is empty");
  auto exists = [](const std::string& p) {
    if (!fs::exists(p)) throw IoError("manifest: missing file " + p);
  };
  std::set<std::string> ids;
  for (const auto& d : m.datasets) {
    if (!ids.insert(d.dataset_id).second) throw InvalidArgument("manifest: duplicate dataset id " + d.dataset_id);
    exists(d.activations);
    exists(d.targets);
    if (d.ood_activations) exists(*d.ood_activations);
    if (d.ood_targets) exists(*d.ood_targets);
    if (d.token_ids) exists(*d.token_ids);
  }
  for (const auto& s : m.saes) {
    exists(s.path);
    if (s.width == 0) throw InvalidArgument("manifest: SAE " + s.id + " has zero width");
  }
  for (const auto& meth : m.methods) {
    if (meth.family != "attn") family_from_string(meth.family);
    pooling_from_string(meth.pooling);
    if (meth.family == "attn" && meth.features != "activations")
      throw InvalidArgument("manifest: the attention probe reads activations only");
    if (is_sae_source(meth.features)) {
      const auto& s = m.sae(meth.features.substr(4));
      if (meth.k.empty()) throw InvalidArgument("manifest: SAE method without k values");
      for (auto k : meth.k)
        if (k == 0 || k > s.width) throw InvalidArgument("manifest: k=" + std::to_string(k) + " outside [1, width]");
    } else if (meth.features != "activations" && meth.features != "concat_pca") {
      throw InvalidArgument("manifest: unknown feature source " + meth.features);
    } else if (meth.binarize) {
      throw InvalidArgument("manifest: binarize applies to SAE features only");
    }
  }
  for (const auto& r : m.regimes)
    for (double v : r.values) RegimeSpec{r.kind, v, 0, 0}.validate();
}

/// Reads a manifest; relative paths resolve against the manifest's directory. Dataset
/// entries are either paths to dataset manifests or inline dataset objects.
inline ExperimentManifest experiment_manifest_from_json(const nlohmann::json& j, const fs::path& base = {}) {
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return (path.is_relative() && !base.empty() ? base / path : path).string();
  };
  ExperimentManifest m;
  m.source = j;
  try {
    for (const auto& d : j.at("datasets")) {
      if (d.is_string()) m.datasets.push_back(read_dataset_manifest(resolve(d.get<std::string>())));
      else m.datasets.push_back(dataset_manifest_from_json(d, base));
    }
    for (const auto& s : j.value("saes", nlohmann::json::array()))
      m.saes.push_back({s.at("id"), resolve(s.at("path")), s.at("width"), s.value("l0", 0.0)});
    for (const auto& x : j.at("methods")) {
      MethodSpec ms;
      ms.family = x.at("family");
      ms.features = x.value("features", std::string("activations"));
      ms.pooling = x.value("pooling", std::string("last"));
      ms.binarize = x.value("binarize", false);
      if (is_sae_source(ms.features))
        ms.k = x.contains("k") ? x["k"].get<std::vector<std::size_t>>() : default_k_values();
      m.methods.push_back(ms);
    }
    for (const auto& r : j.value("regimes", nlohmann::json::array())) {
      RegimeAxis axis;
      axis.kind = regime_from_string(r.at("kind"));
      axis.values = r.contains("values") ? r["values"].get<std::vector<double>>() : default_regime_values(axis.kind);
      m.regimes.push_back(axis);
    }
    m.seed = j.value("seed", std::uint64_t{0});
    m.output_dir = resolve(j.value("output_dir", std::string("results")));
    m.workers = std::max<std::size_t>(1, j.value("workers", std::size_t{1}));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("experiment manifest: ") + e.what());
  }
  if (m.regimes.empty()) m.regimes.push_back({RegimeKind::Standard, {0.0}});
  return m;
}

inline ExperimentManifest read_experiment_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("experiment manifest: ") + e.what());
  }
  return experiment_manifest_from_json(j, fs::path(path).parent_path());
}

/// The roster with SAE k values expanded.
inline std::vector<MethodId> expand_methods(const ExperimentManifest& m) {
  std::vector<MethodId> out;
  for (const auto& spec : m.methods) {
    MethodId id;
    id.family = spec.family;
    id.features = spec.features;
    id.pooling = spec.family == "attn" ? "attn" : spec.pooling;
    id.binarized = spec.binarize;
    if (is_sae_source(spec.features)) {
      const auto& s = m.sae(spec.features.substr(4));
      id.is_sae = true;
      id.width = s.width;
      id.l0 = s.l0;
      for (auto k : spec.k) {
        id.k = k;
        out.push_back(id);
      }
    } else {
      out.push_back(id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records on disk

inline const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols{
      "dataset_id", "regime",   "param",       "method_id",   "k",            "width",
      "l0",         "pooling",  "auc_val",     "auc_test",    "seed",         "family",
      "features",   "is_sae",   "binarized",   "hyperparams", "manifest_hash", "task_key"};
  return cols;
}

inline std::vector<std::string> record_row(const EvalRecord& r) {
  return {r.dataset_id,
          r.regime,
          csv::fmt(r.param),
          r.method.str(),
          std::to_string(r.method.k),
          std::to_string(r.method.width),
          csv::fmt(r.method.l0),
          r.method.pooling,
          csv::fmt(r.auc_val),
          csv::fmt(r.auc_test),
          std::to_string(r.seed),
          r.method.family,
          r.method.features,
          r.method.is_sae ? "1" : "0",
          r.method.binarized ? "1" : "0",
          r.hyperparams,
          r.manifest_hash,
          r.task_key};
}

inline std::vector<EvalRecord> read_records(const fs::path& dir) {
  const fs::path path = dir / "records.csv";
  if (!fs::exists(path)) return {};
  const auto t = csv::read(path.string());
  std::vector<std::size_t> col;
  for (const auto& name : record_columns()) col.push_back(t.column(name));
  std::vector<EvalRecord> out;
  for (const auto& row : t.rows) {
    auto f = [&](std::size_t i) -> const std::string& { return row[col[i]]; };
    EvalRecord r;
    r.dataset_id = f(0);
    r.regime = f(1);
    r.param = std::stod(f(2));
    r.method.k = std::stoull(f(4));
    r.method.width = std::stoull(f(5));
    r.method.l0 = std::stod(f(6));
    r.method.pooling = f(7);
    r.auc_val = std::stod(f(8));
    r.auc_test = std::stod(f(9));
    r.seed = std::stoull(f(10));
    r.method.family = f(11);
    r.method.features = f(12);
    r.method.is_sae = f(13) == "1";
    r.method.binarized = f(14) == "1";
    r.hyperparams = f(15);
    r.manifest_hash = f(16);
    r.task_key = f(17);
    if (r.method.str() != f(3)) throw FormatError("records.csv: method_id does not match its columns");
    out.push_back(std::move(r));
  }
  return out;
}

/// Serialises appends to records.csv and rewrites of index.json.
class RecordWriter {
 public:
  explicit RecordWriter(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    const auto idx = dir_ / "index.json";
    if (fs::exists(idx)) {
      std::ifstream in(idx);
      nlohmann::json j;
      in >> j;
      for (const auto& [hash, key] : j.at("completed").items()) completed_[hash] = key.get<std::string>();
    }
    if (!fs::exists(dir_ / "records.csv")) std::ofstream(dir_ / "records.csv") << csv::join(record_columns()) << '\n';
  }

  bool done(const std::string& task_hash) const {
    std::lock_guard lock(mu_);
    return completed_.count(task_hash) > 0;
  }

  void append(const EvalRecord& r, const std::string& task_hash) {
    std::lock_guard lock(mu_);
    {
      std::ofstream out(dir_ / "records.csv", std::ios::app);
      out << csv::join(record_row(r)) << '\n';
      if (!out) throw IoError("cannot append to records.csv");
    }
    completed_[task_hash] = r.task_key;
    nlohmann::json j{{"completed", completed_}};
    const auto tmp = dir_ / "index.json.tmp";
    std::ofstream(tmp) << j.dump(1) << '\n';
    fs::rename(tmp, dir_ / "index.json");
  }

  void failure(const std::string& task_key, const std::string& what) {
    std::lock_guard lock(mu_);
    const auto path = dir_ / "failures.csv";
    const bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (fresh) out << "task_key,error\n";
    out << csv::join({task_key, what}) << '\n';
  }

  void write_model(const std::string& task_hash, const nlohmann::json& j) {
    std::lock_guard lock(mu_);
    fs::create_directories(dir_ / "models");
    std::ofstream(dir_ / "models" / (task_hash + ".json")) << j.dump() << '\n';
  }

 private:
  fs::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> completed_;
};

// ---------------------------------------------------------------------------
// Quivers

inline const char* kQuiverBaselines = "baselines";
inline const char* kQuiverWithSae = "baselines+sae";

struct QuiverRow {
  std::string dataset_id;
  std::string regime;
  double param = 0;
  std::string quiver;
  QuiverResult result;
};

/// Quivers per (dataset, regime point): baselines only, and baselines plus SAE probes.
/// A quiver with no records at a point is omitted. Output order follows the first
/// appearance of each point in `records`.
inline std::vector<QuiverRow> compute_quivers(const std::vector<EvalRecord>& records) {
  using Key = std::tuple<std::string, std::string, double>;
  std::vector<Key> order;
  std::map<Key, std::vector<EvalRecord>> groups;
  for (const auto& r : records) {
    Key key{r.dataset_id, r.regime, r.param};
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(r);
  }
  std::vector<QuiverRow> out;
  for (const auto& key : order) {
    const auto& all = groups[key];
    std::vector<EvalRecord> base;
    for (const auto& r : all)
      if (!r.method.is_sae) base.push_back(r);
    const auto& [ds, regime, param] = key;
    if (!base.empty()) out.push_back({ds, regime, param, kQuiverBaselines, quiver_select(base)});
    out.push_back({ds, regime, param, kQuiverWithSae, quiver_select(all)});
  }
  return out;
}

inline void write_quivers(const fs::path& dir, const std::vector<QuiverRow>& rows) {
  std::ofstream out(dir / "quiver.csv");
  out << "dataset_id,regime,param,quiver,chosen_method_id,auc_val,auc_test,tie_break_applied,n_records\n";
  for (const auto& q : rows) {
    const auto& c = q.result.chosen_record();
    out << csv::join({q.dataset_id, q.regime, csv::fmt(q.param), q.quiver, c.method.str(), csv::fmt(c.auc_val),
                      csv::fmt(q.result.auc_test), q.result.tie_break_applied ? "1" : "0",
                      std::to_string(q.result.records.size())})
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  std::optional<std::size_t> workers;
  std::optional<RegimeKind> only_regime;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  bool save_models = true;
};

struct RunSummary {
  std::size_t computed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;
  fs::path output_dir;
};

namespace detail {

inline std::string file_hash(const std::string& path) { return content_hash(binio::slurp(path)); }

inline std::string dataset_hash(const DatasetManifest& d) {
  std::string s = file_hash(d.activations) + file_hash(d.targets) + std::to_string(d.seed);
  if (d.ood_activations) s += file_hash(*d.ood_activations) + file_hash(*d.ood_targets);
  return content_hash(s);
}

struct RegimePoint {
  std::shared_ptr<const LabeledDataset> data;  // null when the regime failed
  std::string error;
  RegimeKind kind;
  double value;
};

struct Task {
  std::size_t dataset;
  std::size_t point;
  std::size_t method;
  std::string key;
  std::string hash;
  std::uint64_t seed;
};

/// Features for every example of `d`, plus metadata for the saved model.
struct Featurized {
  Matrix x;
  nlohmann::json info = nlohmann::json::object();
};

inline Featurized featurize(const LabeledDataset& d, const MethodId& m, const ExperimentManifest& man,
                            const std::map<std::string, SAEWeights>& saes) {
  Featurized f;
  const Pooling pooling = pooling_from_string(m.pooling);
  const Indices pool = d.split.pool();
  if (m.features == "activations") {
    f.x = pool_activations(d.features, pooling);
  } else if (m.features == "concat_pca") {
    // 20 components, or fewer when the model dimension cannot supply them
    const std::size_t m_comp = std::min<std::size_t>({20, d.features.d_model, pool.size()});
    const auto pca = ConcatPcaFeaturizer::fit(d.features.select(pool), m_comp);
    f.x = pca.transform(d.features);
  } else {
    const std::string id = m.features.substr(4);
    const auto& sae = saes.at(id);
    LatentMatrix z = pool_latents(encode(d.features, sae, /*per_example=*/true), pooling);
    if (m.binarized) z = binarize(z, 1.0);
    const auto sel = select_top_k(rows_at(z.values, pool), labels_at(d.targets, pool), m.k);
    f.x = gather_columns(z.values, sel.indices);
    f.info["sae_id"] = id;
    f.info["sae_path"] = man.sae(id).path;
    f.info["latents"] = sel.indices;
  }
  return f;
}

inline Indices compose(const Indices& outer, const Indices& inner) {
  Indices out;
  out.reserve(inner.size());
  for (auto i : inner) out.push_back(outer[i]);
  return out;
}

/// Selection, final fit on the whole pool, test scoring.
inline EvalRecord run_task(const LabeledDataset& d, const MethodId& m, std::uint64_t seed,
                           const ExperimentManifest& man, const std::map<std::string, SAEWeights>& saes,
                           nlohmann::json& model_json) {
  const Indices pool = d.split.pool();
  const Labels y_pool = labels_at(d.targets, pool);
  require_both_classes(y_pool, "training pool");
  const Labels y_test = labels_at(d.targets, d.split.test);
  require_both_classes(y_test, "test split");
  const CVPlan plan = make_cv_plan(pool.size(), seed, &y_pool);
  std::size_t min_train = pool.size();
  for (const auto& fold : plan.folds) min_train = std::min(min_train, fold.train.size());

  EvalRecord rec;
  rec.dataset_id = d.id;
  rec.method = m;
  rec.seed = seed;

  if (m.family == "attn") {
    const auto grid = attn_grid(seed);
    const auto sel = select_hyperparams(grid.size(), y_pool, plan, [&](std::size_t c, const Indices& tr, const Indices& va) {
      const auto probe = train_attn_probe(d.features.select(compose(pool, tr)), labels_at(y_pool, tr), grid[c]);
      return attn_scores(probe, d.features.select(compose(pool, va)));
    });
    const auto probe = train_attn_probe(d.features.select(pool), y_pool, grid[sel.best]);
    rec.auc_val = sel.auc_val;
    rec.auc_test = auc(attn_scores(probe, d.features.select(d.split.test)), y_test);
    model_json = attn_to_json(probe, grid[sel.best]);
    rec.hyperparams = model_json.at("hyperparams").dump();
    return rec;
  }

  const Featurized f = featurize(d, m, man, saes);
  const Matrix x_pool = rows_at(f.x, pool);
  const Family fam = family_from_string(m.family);
  const Penalty penalty = m.is_sae ? Penalty::L1 : Penalty::L2;
  const auto grid = default_grid(fam, penalty, min_train, static_cast<std::size_t>(x_pool.cols()), seed);
  const auto sel = select_hyperparams(grid.size(), y_pool, plan, [&](std::size_t c, const Indices& tr, const Indices& va) {
    const auto model = train_probe(grid[c], rows_at(x_pool, tr), labels_at(y_pool, tr));
    return score(model, rows_at(x_pool, va));
  });
  const auto model = train_probe(grid[sel.best], x_pool, y_pool);
  rec.auc_val = sel.auc_val;
  rec.auc_test = auc(score(model, rows_at(f.x, d.split.test)), y_test);
  rec.hyperparams = hp_string(grid[sel.best]);
  model_json = model_to_json(model);
  model_json["features"] = f.info;
  return rec;
}

}  // namespace detail

/// Runs every (dataset, regime point, method) task not already recorded in the output
/// directory, then rewrites quiver.csv from all records there.
///
/// Seeds: each task trains with derive_seed(global, "task|<dataset>|<method>"), which
/// does not depend on the regime, so a zero-noise point reproduces the standard run.
/// Regime sampling uses derive_seed(global, "regime|<dataset>|<kind>|<value>").
inline RunSummary run_experiment(const ExperimentManifest& manifest, const RunOptions& opt = {}) {
  ExperimentManifest man = manifest;
  if (opt.seed) {
    man.seed = *opt.seed;
    man.source["seed"] = *opt.seed;
  }
  validate(man);
  ensure_sodium();
  RunSummary summary;
  summary.output_dir = opt.output_dir ? fs::path(*opt.output_dir) : fs::path(man.output_dir);
  RecordWriter writer(summary.output_dir);
  const std::string man_hash = man.hash();
  const auto methods = expand_methods(man);

  std::map<std::string, SAEWeights> saes;
  std::map<std::string, std::string> sae_hash;
  for (const auto& s : man.saes) {
    saes[s.id] = read_sae(s.path);
    sae_hash[s.id] = detail::file_hash(s.path);
    if (saes[s.id].width() != s.width)
      throw InvalidArgument("manifest: SAE " + s.id + " width " + std::to_string(s.width) + " does not match its file");
  }

  std::vector<std::shared_ptr<const LabeledDataset>> datasets;
  std::vector<std::string> ds_hash;
  for (const auto& dm : man.datasets) {
    datasets.push_back(std::make_shared<const LabeledDataset>(load_dataset(dm)));
    ds_hash.push_back(detail::dataset_hash(dm));
  }

  std::vector<std::vector<detail::RegimePoint>> points(datasets.size());
  std::vector<detail::Task> tasks;
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    for (const auto& axis : man.regimes) {
      if (opt.only_regime && axis.kind != *opt.only_regime) continue;
      for (double v : axis.values) {
        detail::RegimePoint pt{nullptr, "", axis.kind, v};
        const std::size_t pi = points[di].size();
        std::string point_key = datasets[di]->id + "|" + to_string(axis.kind) + "|" + csv::fmt(v);
        RegimeSpec spec{axis.kind, v, derive_seed(man.seed, "regime|" + point_key), 0};
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
          const auto& m = methods[mi];
          nlohmann::json task_id{{"dataset", ds_hash[di]},
                                 {"regime", to_string(axis.kind)},
                                 {"param", v},
                                 {"method", m.str()},
                                 {"seed", man.seed}};
          if (m.is_sae) task_id["sae"] = sae_hash.at(m.features.substr(4));
          tasks.push_back({di, pi, mi, point_key + "|" + m.str(), content_hash(task_id.dump()),
                           derive_seed(man.seed, "task|" + datasets[di]->id + "|" + m.str())});
        }
        bool needed = false;
        for (auto it = tasks.end() - static_cast<std::ptrdiff_t>(methods.size()); it != tasks.end(); ++it)
          needed = needed || !writer.done(it->hash);
        if (needed) {
          try {
            pt.data = std::make_shared<const LabeledDataset>(apply_regime(*datasets[di], spec));
          } catch (const Error& e) {
            pt.error = e.what();
          }
        }
        points[di].push_back(std::move(pt));
      }
    }
  }

  std::atomic<std::size_t> next{0}, computed{0}, skipped{0};
  std::mutex fail_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& t = tasks[i];
      if (writer.done(t.hash)) {
        ++skipped;
        continue;
      }
      const auto& pt = points[t.dataset][t.point];
      try {
        if (!pt.data) throw InfeasibleRegime(pt.error);
        nlohmann::json model;
        EvalRecord rec = detail::run_task(*pt.data, methods[t.method], t.seed, man, saes, model);
        rec.regime = to_string(pt.kind);
        rec.param = pt.value;
        rec.manifest_hash = man_hash;
        rec.task_key = t.key;
        if (opt.save_models) {
          model["task_key"] = t.key;
          model["method"] = rec.method.str();
          model["pooling"] = rec.method.pooling;
          writer.write_model(t.hash, model);
        }
        writer.append(rec, t.hash);
        ++computed;
      } catch (const std::exception& e) {
        writer.failure(t.key, e.what());
        std::lock_guard lock(fail_mu);
        summary.failures.push_back(t.key + ": " + e.what());
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(opt.workers.value_or(man.workers), tasks.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  summary.computed = computed;
  summary.skipped = skipped;
  summary.failed = summary.failures.size();
  std::sort(summary.failures.begin(), summary.failures.end());

  const auto records = read_records(summary.output_dir);
  if (!records.empty()) write_quivers(summary.output_dir, compute_quivers(records));
  return summary;
}

// ---------------------------------------------------------------------------
// Report

struct MeanCI {
  double mean = 0, lo = 0, hi = 0;
  std::size_t n = 0;
};

/// Mean with a normal-approximation 95% interval (sample standard deviation); an
/// interval of zero width for a single value.
inline MeanCI mean_ci(const std::vector<double>& v) {
  if (v.empty()) throw InvalidArgument("mean_ci: no values");
  MeanCI r;
  r.n = v.size();
  long double s = 0;
  for (double x : v) s += x;
  r.mean = static_cast<double>(s / v.size());
  double half = 0;
  if (v.size() > 1) {
    long double ss = 0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    half = 1.959963984540054 * std::sqrt(static_cast<double>(ss / (v.size() - 1)) / static_cast<double>(v.size()));
  }
  r.lo = r.mean - half;
  r.hi = r.mean + half;
  return r;
}

struct ReportTables {
  struct MethodRow {
    std::string regime;
    double param;
    std::string method_id;
    MeanCI auc;
  };
  struct DeltaRow {
    std::string regime;
    double param;
    MeanCI delta;
  };
  struct ChosenRow {
    std::string regime;
    double param;
    std::size_t sae_chosen;
    std::size_t n_datasets;
  };
  struct DatasetRow {
    std::string dataset_id;
    std::string regime;
    double param;
    std::optional<double> baselines_auc;
    double with_sae_auc;
    std::string chosen_method;
  };
  std::vector<MethodRow> method_auc;
  std::vector<DeltaRow> quiver_delta;
  std::vector<ChosenRow> sae_chosen;
  std::vector<DatasetRow> per_dataset;
};

/// Aggregates records over datasets: mean test AUC per method, quiver delta (with SAE
/// minus without) per regime point over datasets having both quivers, how often the SAE
/// quiver chose an SAE probe, and one row per dataset and point.
inline ReportTables summarize(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw InvalidArgument("report: no evaluation records");
  using Point = std::pair<std::string, double>;
  ReportTables t;
  std::map<std::tuple<std::string, double, std::string>, std::vector<double>> by_method;
  for (const auto& r : records) by_method[{r.regime, r.param, r.method.str()}].push_back(r.auc_test);
  for (const auto& [key, v] : by_method) t.method_auc.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), mean_ci(v)});

  std::map<std::pair<std::string, Point>, ReportTables::DatasetRow> rows;
  for (const auto& q : compute_quivers(records)) {
    auto& row = rows[{q.dataset_id, {q.regime, q.param}}];
    row.dataset_id = q.dataset_id;
    row.regime = q.regime;
    row.param = q.param;
    if (q.quiver == kQuiverBaselines) {
      row.baselines_auc = q.result.auc_test;
    } else {
      row.with_sae_auc = q.result.auc_test;
      row.chosen_method = q.result.chosen_record().method.str();
    }
  }
  std::map<Point, std::vector<double>> deltas;
  std::map<Point, std::pair<std::size_t, std::size_t>> chosen;
  for (const auto& [key, row] : rows) {
    t.per_dataset.push_back(row);
    const Point p = key.second;
    if (row.baselines_auc) deltas[p].push_back(row.with_sae_auc - *row.baselines_auc);
    auto& c = chosen[p];
    c.second++;
    for (const auto& r : records)
      if (r.dataset_id == row.dataset_id && r.regime == row.regime && r.param == row.param &&
          r.method.str() == row.chosen_method) {
        c.first += r.method.is_sae ? 1 : 0;
        break;
      }
  }
  for (const auto& [p, v] : deltas) t.quiver_delta.push_back({p.first, p.second, mean_ci(v)});
  for (const auto& [p, c] : chosen) t.sae_chosen.push_back({p.first, p.second, c.first, c.second});
  return t;
}

inline void write_report(const fs::path& dir, const ReportTables& t) {
  {
    std::ofstream out(dir / "report_method_auc.csv");
    out << "regime,param,method_id,mean_auc_test,ci_low,ci_high,n_datasets\n";
    for (const auto& r : t.method_auc)
      out << csv::join({r.regime, csv::fmt(r.param), r.method_id, csv::fmt(r.auc.mean), csv::fmt(r.auc.lo),
                        csv::fmt(r.auc.hi), std::to_string(r.auc.n)})
          << '\n';
  }
  {
    std::ofstream out(dir / "report_quiver_delta.csv");
    out << "regime,param,mean_delta,ci_low,ci_high,n_datasets\n";
    for (const auto& r : t.quiver_delta)
      out << csv::join({r.regime, csv::fmt(r.param), csv::fmt(r.delta.mean), csv::fmt(r.delta.lo), csv::fmt(r.delta.hi),
                        std::to_string(r.delta.n)})
          << '\n';
  }
  {
    std::ofstream out(dir / "report_sae_chosen.csv");
    out << "regime,param,sae_chosen,n_datasets\n";
    for (const auto& r : t.sae_chosen)
      out << csv::join({r.regime, csv::fmt(r.param), std::to_string(r.sae_chosen), std::to_string(r.n_datasets)}) << '\n';
  }
  {
    std::ofstream out(dir / "report_per_dataset.csv");
    out << "dataset_id,regime,param,baselines_auc_test,with_sae_auc_test,delta,chosen_method_id\n";
    for (const auto& r : t.per_dataset)
      out << csv::join({r.dataset_id, r.regime, csv::fmt(r.param), r.baselines_auc ? csv::fmt(*r.baselines_auc) : "",
                        csv::fmt(r.with_sae_auc), r.baselines_auc ? csv::fmt(r.with_sae_auc - *r.baselines_auc) : "",
                        r.chosen_method})
          << '\n';
  }
}

/// Reads records.csv from `dir`, writes the report_*.csv tables next to it.
inline ReportTables report(const fs::path& dir) {
  const auto records = read_records(dir);
  if (records.empty()) throw InvalidArgument("report: no evaluation records in " + dir.string());
  auto t = summarize(records);
  write_report(dir, t);
  return t;
}

}  // namespace sprobe
