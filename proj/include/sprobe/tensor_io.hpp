#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sprobe/binary_io.hpp"
#include "sprobe/tensor.hpp"

namespace sprobe {

inline constexpr char kTensorMagic[4] = {'S', 'P', 'B', 'A'};
inline constexpr std::uint32_t kTensorVersion = 1;

/// Serialises to the SPBA layout:
///   "SPBA" | u32 version | u64 n_examples | u64 n_tokens | u64 d_model |
///   u32 token_mask[n_examples] | f32 data[...]
/// All integers and floats little-endian.
inline std::string encode_tensor(const ActivationTensor& t) {
  t.validate();
  std::string out(kTensorMagic, 4);
  binio::put_le<std::uint32_t>(out, kTensorVersion);
  binio::put_le<std::uint64_t>(out, t.n_examples);
  binio::put_le<std::uint64_t>(out, t.n_tokens);
  binio::put_le<std::uint64_t>(out, t.d_model);
  for (auto m : t.token_mask) binio::put_le<std::uint32_t>(out, m);
  out.reserve(out.size() + t.data.size() * 4);
  for (float v : t.data) binio::put_le<float>(out, v);
  return out;
}

inline ActivationTensor decode_tensor(std::string bytes) {
  binio::Reader in(std::move(bytes));
  if (!in.has(4) || in.take(4) != std::string(kTensorMagic, 4)) throw BadMagicError();
  const auto version = in.get<std::uint32_t>();
  if (version != kTensorVersion) throw VersionMismatchError(version);
  ActivationTensor t;
  t.n_examples = in.get<std::uint64_t>();
  t.n_tokens = in.get<std::uint64_t>();
  t.d_model = in.get<std::uint64_t>();
  // Guard the size arithmetic before allocating.
  const auto cells = static_cast<long double>(t.n_examples) * t.n_tokens * t.d_model;
  if (cells * 4 + t.n_examples * 4.0L > static_cast<long double>(in.remaining())) throw TruncatedPayloadError();
  t.token_mask.resize(t.n_examples);
  for (auto& m : t.token_mask) m = in.get<std::uint32_t>();
  t.data.resize(t.n_examples * t.n_tokens * t.d_model);
  for (auto& v : t.data) v = in.get<float>();
  if (in.remaining() != 0) throw ShapeError("trailing bytes after tensor payload");
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw ShapeError(e.what());
  }
  return t;
}

inline void write_tensor(const ActivationTensor& t, const std::string& path) {
  binio::dump(path, encode_tensor(t));
}

inline ActivationTensor read_tensor(const std::string& path) { return decode_tensor(binio::slurp(path)); }

/// Targets are stored as text, one 0/1 label per line.
inline void write_targets(const Labels& y, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (int v : y) out << v << '\n';
}

inline Labels read_targets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Labels y;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int v = 0;
    try {
      v = std::stoi(line);
    } catch (const std::exception&) {
      throw FormatError("unparseable target line: " + line);
    }
    if (v != 0 && v != 1) throw InvalidArgument("targets must be 0 or 1, got " + line);
    y.push_back(v);
  }
  return y;
}

inline std::vector<std::int64_t> read_token_ids(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::int64_t> ids;
  std::int64_t v;
  while (in >> v) ids.push_back(v);
  return ids;
}

struct DatasetManifest {
  std::string dataset_id;
  std::string activations;
  std::string targets;
  std::optional<std::string> ood_activations;
  std::optional<std::string> ood_targets;
  std::optional<std::string> token_ids;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j{{"dataset_id", m.dataset_id},
                   {"activations", m.activations},
                   {"targets", m.targets},
                   {"seed", m.seed}};
  if (m.ood_activations) j["ood_activations"] = *m.ood_activations;
  if (m.ood_targets) j["ood_targets"] = *m.ood_targets;
  if (m.token_ids) j["token_ids"] = *m.token_ids;
  return j;
}

/// Relative paths are resolved against `base_dir`.
inline DatasetManifest dataset_manifest_from_json(const nlohmann::json& j,
                                                  const std::filesystem::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
  };
  DatasetManifest m;
  try {
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.activations = resolve(j.at("activations").get<std::string>());
    m.targets = resolve(j.at("targets").get<std::string>());
    m.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("ood_activations")) m.ood_activations = resolve(j["ood_activations"].get<std::string>());
    if (j.contains("ood_targets")) m.ood_targets = resolve(j["ood_targets"].get<std::string>());
    if (j.contains("token_ids")) m.token_ids = resolve(j["token_ids"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  if (m.ood_activations.has_value() != m.ood_targets.has_value())
    throw FormatError("dataset manifest: ood_activations and ood_targets must be given together");
  return m;
}

inline DatasetManifest read_dataset_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  return dataset_manifest_from_json(j, std::filesystem::path(path).parent_path());
}

/// Seeded split: a held-out test set of max(100, test_fraction * n) examples (capped so
/// that at least two remain), then 20% of the remaining pool as validation.
inline Split default_split(std::size_t n, std::uint64_t seed, double test_fraction = 0.2) {
  if (n < 3) throw InvalidArgument("need at least 3 examples to split");
  Rng rng(seed);
  const Indices perm = permutation(n, rng);
  std::size_t n_test = std::max<std::size_t>(100, static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n))));
  n_test = std::min(n_test, n - 2);
  const std::size_t pool = n - n_test;
  const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(pool)));
  Split s;
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline LabeledDataset load_dataset(const DatasetManifest& m) {
  LabeledDataset d;
  d.id = m.dataset_id;
  d.features = read_tensor(m.activations);
  d.targets = read_targets(m.targets);
  if (d.targets.size() != d.features.n_examples)
    throw ShapeError("dataset " + m.dataset_id + ": " + std::to_string(d.targets.size()) +
                     " targets for " + std::to_string(d.features.n_examples) + " examples");
  d.split = default_split(d.size(), m.seed);
  if (m.ood_activations) {
    auto ood = std::make_shared<LabeledDataset>();
    ood->id = m.dataset_id + ":ood";
    ood->features = read_tensor(*m.ood_activations);
    ood->targets = read_targets(*m.ood_targets);
    if (ood->targets.size() != ood->features.n_examples)
      throw ShapeError("dataset " + m.dataset_id + ": OOD target length mismatch");
    if (ood->features.d_model != d.features.d_model)
      throw ShapeError("dataset " + m.dataset_id + ": OOD d_model mismatch");
    for (std::size_t i = 0; i < ood->size(); ++i) ood->split.test.push_back(i);
    d.ood = std::move(ood);
  }
  if (m.token_ids) {
    d.token_ids = read_token_ids(*m.token_ids);
    if (d.token_ids.size() != d.features.n_examples * d.features.n_tokens)
      throw ShapeError("dataset " + m.dataset_id + ": token id count mismatch");
  }
  d.validate();
  return d;
}

}  // namespace sprobe
