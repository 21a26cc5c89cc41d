// Command-line front end: fixtures, encoding, experiment runs, reports, diagnostics.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sprobe/sprobe.hpp"

namespace fs = std::filesystem;
using namespace sprobe;

namespace {

struct FixtureArgs {
  std::string out = "fixture";
  std::uint64_t seed = 0;
  std::size_t d_model = 64;
  std::size_t width = 256;
  std::size_t n = 1024;
  std::size_t tokens = 1;
  double noise = 0.05;
  bool or_target = false;
};

void gen_fixture(const FixtureArgs& a) {
  fs::create_directories(a.out);
  WorldOptions wo;
  wo.noise_sigma = a.noise;
  if (a.or_target) wo.target_features = {0, 1};
  const auto world = generate_world(a.d_model, a.width, derive_seed(a.seed, "world"), wo);
  const auto sample = sample_dataset(world, a.n, a.tokens, derive_seed(a.seed, "sample"));
  const auto oracle = oracle_sae(world);
  const fs::path dir(a.out);
  write_tensor(sample.data.features, (dir / "activations.spba").string());
  write_targets(sample.data.targets, (dir / "targets.txt").string());
  write_sae(oracle.sae, (dir / "oracle.spsw").string());

  DatasetManifest dm{"fixture", "activations.spba", "targets.txt", {}, {}, {}, derive_seed(a.seed, "sample")};
  std::ofstream(dir / "dataset.json") << to_json(dm).dump(2) << '\n';
  nlohmann::json exp{
      {"datasets", {"dataset.json"}},
      {"saes", {{{"id", "oracle"}, {"path", "oracle.spsw"}, {"width", a.width}, {"l0", oracle.sae.nominal_l0}}}},
      {"methods",
       {{{"family", "logreg"}, {"features", "activations"}, {"pooling", "last"}},
        {{"family", "logreg"}, {"features", "sae:oracle"}, {"pooling", "last"}, {"k", {16}}}}},
      {"regimes", nlohmann::json::array()},
      {"seed", a.seed},
      {"output_dir", "results"},
      {"workers", 1}};
  std::ofstream(dir / "experiment.json") << exp.dump(2) << '\n';
  std::cout << "wrote fixture to " << dir.string() << " (" << oracle.failed.size()
            << " oracle latents below the agreement target)\n";
}

void encode_cmd(const std::string& sae_path, const std::string& in, const std::string& out, const std::string& pool,
                bool per_example) {
  const auto sae = read_sae(sae_path);
  const auto x = read_tensor(in);
  const auto z = encode(x, sae, per_example);
  ActivationTensor t;
  if (pool.empty()) {
    t = ActivationTensor(x.n_examples, x.n_tokens, sae.width());
    t.token_mask = x.token_mask;
    for (Eigen::Index i = 0; i < z.values.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(z.values.data()[i]);
  } else {
    const auto pooled = pool_latents(z, pooling_from_string(pool));
    t = ActivationTensor::from_matrix(pooled.values);
  }
  write_tensor(t, out);
  std::cout << "encoded " << x.n_examples << " examples into " << sae.width() << " latents\n";
}

void print_quivers(const std::vector<QuiverRow>& rows) {
  for (const auto& q : rows)
    std::cout << q.dataset_id << ' ' << q.regime << '=' << q.param << ' ' << q.quiver << ": "
              << q.result.chosen_record().method.str() << " val=" << q.result.chosen_record().auc_val
              << " test=" << q.result.auc_test << (q.result.tie_break_applied ? " (tie-break)" : "") << '\n';
}

void diagnose(const std::string& dataset_manifest, const std::string& model_path, const std::string& out,
              std::size_t top_n, std::size_t min_occ) {
  const auto dm = read_dataset_manifest(dataset_manifest);
  const auto data = load_dataset(dm);
  std::ifstream in(model_path);
  if (!in) throw IoError("cannot open " + model_path);
  nlohmann::json j;
  in >> j;
  if (j.value("family", "") == "attn") throw InvalidArgument("diagnose: attention probes are not supported");
  const auto model = model_from_json(j);
  const auto pooling = pooling_from_string(j.value("pooling", std::string("last")));
  Matrix x;
  const auto& feat = j.value("features", nlohmann::json::object());
  bool latent_features = false;
  if (feat.contains("sae_path")) {
    latent_features = true;
    const auto sae = read_sae(feat.at("sae_path"));
    const auto z = pool_latents(encode(data.features, sae, true), pooling);
    x = gather_columns(z.values, feat.at("latents").get<Indices>());
  } else {
    x = pool_activations(data.features, pooling);
  }
  fs::create_directories(out);
  const auto rep = mine_disagreements(model, x, data.targets, top_n);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  write_disagreements_csv(rep.rows, (fs::path(out) / "disagreements.csv").string());
  std::cout << "wrote " << rep.rows.size() << " disagreements\n";
  if (!data.token_ids.empty() && !latent_features) {
    const auto table = top_activating_tokens(model, data.features, data.token_ids, min_occ);
    write_token_table_csv(table, (fs::path(out) / "token_table.csv").string());
    std::cout << "wrote " << table.size() << " token rows\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-probing experiments: probes on activations and SAE latents"};
  app.require_subcommand(1);

  FixtureArgs fx;
  auto* gen = app.add_subcommand("gen-fixture", "Write a synthetic dataset, its oracle SAE and an experiment manifest");
  gen->add_option("--out", fx.out, "Output directory");
  gen->add_option("--seed", fx.seed, "Global seed");
  gen->add_option("--d-model", fx.d_model);
  gen->add_option("--width", fx.width, "Number of ground-truth features");
  gen->add_option("--n", fx.n, "Number of examples");
  gen->add_option("--tokens", fx.tokens, "Tokens per example");
  gen->add_option("--noise", fx.noise, "Gaussian noise sigma");
  gen->add_flag("--or-target", fx.or_target, "Target is the OR of features 0 and 1");

  std::string sae_path, enc_in, enc_out, enc_pool;
  bool per_example = false;
  auto* enc = app.add_subcommand("encode", "Encode an activation tensor with SAE weights");
  enc->add_option("--sae", sae_path)->required();
  enc->add_option("--activations", enc_in)->required();
  enc->add_option("--out", enc_out)->required();
  enc->add_option("--pooling", enc_pool, "Pool tokens (last, mean, max); default keeps tokens");
  enc->add_flag("--per-example", per_example, "BatchTopK over each example's tokens");

  std::string manifest, out_dir, regime;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  auto* run = app.add_subcommand("run", "Run an experiment manifest");
  run->add_option("--manifest", manifest)->required();
  run->add_option("--seed", seed, "Override the manifest's global seed");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--workers", workers, "Worker threads");
  run->add_option("--regime", regime, "Only run this regime")
      ->check(CLI::IsMember({"standard", "scarcity", "imbalance", "noise", "shift"}));

  std::string results_dir;
  auto* quiver = app.add_subcommand("quiver", "Recompute quiver selections from a results directory");
  quiver->add_option("--out", results_dir, "Results directory")->required();
  auto* rep = app.add_subcommand("report", "Write summary tables for a results directory");
  rep->add_option("--out", results_dir, "Results directory")->required();

  std::string model_path;
  std::size_t top_n = 20, min_occ = 10;
  auto* diag = app.add_subcommand("diagnose", "Mine label disagreements and token tables for a trained probe");
  diag->add_option("--manifest", manifest, "Dataset manifest")->required();
  diag->add_option("--model", model_path, "Model JSON saved by run")->required();
  diag->add_option("--out", out_dir, "Output directory")->required();
  diag->add_option("--top", top_n);
  diag->add_option("--min-occurrences", min_occ);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      gen_fixture(fx);
    } else if (*enc) {
      encode_cmd(sae_path, enc_in, enc_out, enc_pool, per_example);
    } else if (*run) {
      RunOptions opt;
      opt.seed = seed;
      opt.workers = workers;
      if (!out_dir.empty()) opt.output_dir = out_dir;
      if (!regime.empty()) opt.only_regime = regime_from_string(regime);
      const auto summary = run_experiment(read_experiment_manifest(manifest), opt);
      std::cout << "computed " << summary.computed << ", skipped " << summary.skipped << ", failed "
                << summary.failed << " -> " << summary.output_dir.string() << '\n';
      for (const auto& f : summary.failures) std::cerr << "failed: " << f << '\n';
      return summary.failed ? 2 : 0;
    } else if (*quiver) {
      const auto records = read_records(results_dir);
      if (records.empty()) throw InvalidArgument("no records in " + results_dir);
      const auto rows = compute_quivers(records);
      write_quivers(results_dir, rows);
      print_quivers(rows);
    } else if (*rep) {
      const auto t = report(results_dir);
      for (const auto& d : t.quiver_delta)
        std::cout << d.regime << '=' << d.param << " delta=" << d.delta.mean << " [" << d.delta.lo << ", "
                  << d.delta.hi << "] n=" << d.delta.n << '\n';
    } else if (*diag) {
      diagnose(manifest, model_path, out_dir, top_n, min_occ);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
