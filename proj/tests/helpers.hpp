#pragma once

#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "sprobe/sprobe.hpp"
#include "oracles.hpp"

namespace testing_util {

/// A scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("sprobe_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline sprobe::ActivationTensor random_tensor(std::mt19937_64& rng, std::size_t max_e = 8, std::size_t max_t = 5,
                                              std::size_t max_d = 9) {
  std::uniform_int_distribution<std::size_t> e(1, max_e), t(1, max_t), d(1, max_d);
  sprobe::ActivationTensor x(e(rng), t(rng), d(rng));
  std::normal_distribution<float> g(0.0f, 3.0f);
  for (auto& v : x.data) v = g(rng);
  for (auto& m : x.token_mask)
    m = static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(1, x.n_tokens)(rng));
  return x;
}

inline sprobe::Matrix random_matrix(std::mt19937_64& rng, long rows, long cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  sprobe::Matrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline sprobe::Labels random_labels(std::mt19937_64& rng, std::size_t n, double p = 0.5) {
  std::bernoulli_distribution b(p);
  sprobe::Labels y(n);
  for (auto& v : y) v = b(rng);
  if (n >= 2) {
    y[0] = 1;
    y[1] = 0;
  }
  return y;
}

inline oracle::Mat to_rows(const sprobe::Matrix& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline std::vector<double> to_std(const sprobe::Vector& v) { return {v.data(), v.data() + v.size()}; }

inline bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

/// Two Gaussian blobs separated along the first axis.
inline void blobs(std::mt19937_64& rng, std::size_t n, long d, double gap, sprobe::Matrix& x, sprobe::Labels& y) {
  x = random_matrix(rng, static_cast<long>(n), d);
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    x(static_cast<long>(i), 0) += y[i] ? gap : -gap;
  }
}

/// Rows drawn from N(0,1), clipped to [-3, 3], kept only when every hidden
/// pre-activation of `net` lies at least `margin` from the ReLU kink. With a 1e-3
/// finite-difference step no single-parameter perturbation moves a pre-activation by
/// more than about 3e-3, so central differences never straddle a kink.
inline sprobe::Matrix kink_free_batch(const sprobe::MlpNet& net, std::size_t n, std::mt19937_64& rng,
                                      double margin = 0.01) {
  const auto d = static_cast<long>(net.sizes[0]);
  sprobe::Matrix out(static_cast<long>(n), d);
  std::normal_distribution<double> g;
  for (std::size_t filled = 0; filled < n;) {
    sprobe::Matrix row(1, d);
    for (long j = 0; j < d; ++j) row(0, j) = std::clamp(g(rng), -3.0, 3.0);
    sprobe::Matrix h = row;
    bool ok = true;
    for (std::size_t l = 0; l + 1 < net.layers() && ok; ++l) {
      sprobe::Matrix a = h * net.weights(net.params, l);
      a.rowwise() += net.bias(net.params, l);
      ok = (a.array().abs() >= margin).all();
      h = a.cwiseMax(0.0);
    }
    if (ok) out.row(static_cast<long>(filled++)) = row;
  }
  return out;
}

/// Writes a sampled dataset as <id>.spba / <id>.targets under `dir` and returns its
/// inline manifest entry.
inline nlohmann::json write_sample(const std::filesystem::path& dir, const std::string& id,
                                   const sprobe::SampledDataset& s, std::uint64_t split_seed) {
  sprobe::write_tensor(s.data.features, (dir / (id + ".spba")).string());
  sprobe::write_targets(s.data.targets, (dir / (id + ".targets")).string());
  return sprobe::to_json(sprobe::DatasetManifest{id, id + ".spba", id + ".targets", {}, {}, {}, split_seed});
}

/// Writes the oracle encoder of `world` and returns its manifest entry.
inline nlohmann::json write_oracle(const std::filesystem::path& dir, const std::string& id,
                                   const sprobe::FeatureWorld& world) {
  const auto o = sprobe::oracle_sae(world);
  sprobe::write_sae(o.sae, (dir / (id + ".spsw")).string());
  return {{"id", id}, {"path", id + ".spsw"}, {"width", world.width()}, {"l0", o.sae.nominal_l0}};
}

/// A fixture world, `n_datasets` datasets sampled from it with independent seeds, and
/// its oracle SAE, written under `dir`. Returns a manifest with no methods or regimes.
inline nlohmann::json fixture_manifest(const std::filesystem::path& dir, std::uint64_t seed, std::size_t n_datasets = 1,
                                       std::size_t d_model = 64, std::size_t width = 256, std::size_t n = 1024,
                                       double noise = 0.05) {
  sprobe::WorldOptions wo;
  wo.noise_sigma = noise;
  const auto world = sprobe::generate_world(d_model, width, sprobe::derive_seed(seed, "world"), wo);
  nlohmann::json datasets = nlohmann::json::array();
  for (std::size_t i = 0; i < n_datasets; ++i) {
    const auto sample_seed = sprobe::derive_seed(seed, "sample" + std::to_string(i));
    datasets.push_back(write_sample(dir, "ds" + std::to_string(i), sprobe::sample_dataset(world, n, 1, sample_seed), sample_seed));
  }
  return {{"datasets", datasets},
          {"saes", {write_oracle(dir, "oracle", world)}},
          {"methods", nlohmann::json::array()},
          {"regimes", nlohmann::json::array()},
          {"seed", seed},
          {"output_dir", "results"}};
}

inline nlohmann::json method(const std::string& family, const std::string& features = "activations",
                             std::vector<std::size_t> k = {}) {
  nlohmann::json j{{"family", family}, {"features", features}, {"pooling", "last"}};
  if (!k.empty()) j["k"] = k;
  return j;
}

}  // namespace testing_util
