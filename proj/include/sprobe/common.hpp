#pragma once

#include <Eigen/Dense>
#include <sodium.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sprobe/error.hpp"

namespace sprobe {

/// Dense feature matrix, one example per row. float64 for all downstream math.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;
using Indices = std::vector<std::size_t>;
using Rng = std::mt19937_64;

inline void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error("libsodium initialisation failed");
}

/// BLAKE2b-256 of `data`, hex encoded.
inline std::string content_hash(std::string_view data) {
  ensure_sodium();
  unsigned char out[32];
  crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(data.data()),
                     data.size(), nullptr, 0);
  char hex[65];
  sodium_bin2hex(hex, sizeof hex, out, sizeof out);
  return std::string(hex);
}

/// Derives a child seed from a parent seed and a string key: the first eight bytes
/// (little-endian) of BLAKE2b-256(le64(parent) || key).
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view key) {
  ensure_sodium();
  std::string buf(8, '\0');
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((parent >> (8 * i)) & 0xff);
  buf.append(key);
  unsigned char out[32];
  crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(buf.data()),
                     buf.size(), nullptr, 0);
  std::uint64_t s = 0;
  for (int i = 0; i < 8; ++i) s |= static_cast<std::uint64_t>(out[i]) << (8 * i);
  return s;
}

inline std::string base64_encode(std::span<const unsigned char> bytes) {
  ensure_sodium();
  const auto variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

inline std::vector<unsigned char> base64_decode(std::string_view text) {
  ensure_sodium();
  std::vector<unsigned char> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len,
                        nullptr, sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw FormatError("invalid base64");
  }
  out.resize(len);
  return out;
}

/// float64 arrays are stored as base64 of their little-endian bytes.
inline std::string encode_doubles(std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * sizeof(double));
  if (!bytes.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  return base64_encode(bytes);
}

inline std::vector<double> decode_doubles(std::string_view text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(double) != 0) throw FormatError("double array length");
  std::vector<double> out(bytes.size() / sizeof(double));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

inline Labels labels_at(const Labels& y, const Indices& idx) {
  Labels out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(y[i]);
  return out;
}

inline Matrix rows_at(const Matrix& x, const Indices& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

inline std::size_t count_positive(const Labels& y) {
  std::size_t n = 0;
  for (int v : y) n += v == 1;
  return n;
}

inline void require_both_classes(const Labels& y, const char* what) {
  const auto pos = count_positive(y);
  if (pos == 0 || pos == y.size()) throw SingleClassError(std::string(what) + ": single-class targets");
}

/// Fisher-Yates permutation of 0..n-1 driven by `rng`.
inline Indices permutation(std::size_t n, Rng& rng) {
  Indices p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return p;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// Mean binary cross-entropy of logits against 0/1 labels.
inline double mean_logloss(const Vector& logits, const Labels& y) {
  double s = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    s += y[static_cast<std::size_t>(i)] ? softplus(-logits[i]) : softplus(logits[i]);
  }
  return logits.size() ? s / static_cast<double>(logits.size()) : 0.0;
}

}  // namespace sprobe
