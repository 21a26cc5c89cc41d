#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace sprobe;

TEST(World, DeterministicShapeAndNorms) {
  const auto a = generate_world(64, 256, 42), b = generate_world(64, 256, 42), c = generate_world(64, 256, 43);
  EXPECT_EQ(a.dictionary.rows(), 256);
  EXPECT_EQ(a.dictionary.cols(), 64);
  EXPECT_EQ(a.dictionary, b.dictionary);
  EXPECT_EQ(a.firing_prob, b.firing_prob);
  EXPECT_NE(a.dictionary, c.dictionary);
  for (long r = 0; r < a.dictionary.rows(); ++r) EXPECT_NEAR(a.dictionary.row(r).norm(), 1.0, 1e-6);
  EXPECT_EQ(a.firing_prob[0], 0.5);
  for (std::size_t f = 1; f < a.width(); ++f) EXPECT_EQ(a.firing_prob[f], 0.02);
  for (std::size_t f = 0; f < a.width(); ++f) EXPECT_DOUBLE_EQ(0.5 * (a.magnitude_lo[f] + a.magnitude_hi[f]), 1.0);
  // the target direction is orthogonal to every background direction
  for (long r = 1; r < 256; ++r) EXPECT_NEAR(a.dictionary.row(0).dot(a.dictionary.row(r)), 0.0, 1e-9);
}

TEST(World, OrthonormalWhenNarrow) {
  const auto w = generate_world(16, 10, 1);
  const Matrix gram = w.dictionary * w.dictionary.transpose();
  EXPECT_LT((gram - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(World, InvalidArguments) {
  EXPECT_THROW(generate_world(1, 10, 0), InvalidArgument);
  EXPECT_THROW(generate_world(10, 1, 0), InvalidArgument);
  WorldOptions o;
  o.target_features = {20};
  EXPECT_THROW(generate_world(8, 10, 0, o), InvalidArgument);
  o.target_features = {1, 1};
  EXPECT_THROW(generate_world(8, 10, 0, o), InvalidArgument);
  o = {};
  o.noise_sigma = -1;
  EXPECT_THROW(generate_world(8, 10, 0, o), InvalidArgument);
  o = {};
  o.background_firing = 1.0;
  EXPECT_THROW(generate_world(8, 10, 0, o), InvalidArgument);
  EXPECT_THROW(sample_dataset(generate_world(8, 10, 0), 3, 1, 0), InvalidArgument);
}

TEST(Sample, NoiselessSingleFeatureIsScaledRow) {
  WorldOptions o;
  o.noise_sigma = 0;
  const auto w = generate_world(12, 30, 2, o);
  const auto s = sample_dataset(w, 400, 1, 3);
  std::size_t checked = 0;
  for (long e = 0; e < 400; ++e) {
    if (s.firing.row(e).sum() != 1.0) continue;
    long f;
    s.firing.row(e).maxCoeff(&f);
    const Eigen::RowVectorXd x = s.data.features.last_token().row(e);
    const double m = x.dot(w.dictionary.row(f));
    EXPECT_GE(m, 0.75 - 1e-6);
    EXPECT_LE(m, 1.25 + 1e-6);
    EXPECT_LT((x - m * w.dictionary.row(f)).cwiseAbs().maxCoeff(), 1e-6);
    ++checked;
  }
  EXPECT_GT(checked, 50u);
}

TEST(Sample, TargetsFollowRuleAtLastToken) {
  const auto w = generate_world(16, 40, 4);
  const auto s = sample_dataset(w, 500, 3, 5);
  const Matrix last = s.last_token_firing();
  for (long e = 0; e < 500; ++e) EXPECT_EQ(s.data.targets[static_cast<std::size_t>(e)], static_cast<int>(last(e, 0)));

  WorldOptions o;
  o.target_features = {2, 7};
  const auto w2 = generate_world(16, 40, 4, o);
  const auto s2 = sample_dataset(w2, 2000, 1, 6);
  std::size_t pos = 0;
  for (long e = 0; e < 2000; ++e) {
    const int want = s2.firing(e, 2) > 0 || s2.firing(e, 7) > 0;
    EXPECT_EQ(s2.data.targets[static_cast<std::size_t>(e)], want);
    pos += static_cast<std::size_t>(want);
  }
  // OR of two features each firing at 1 - sqrt(1/2) is positive half the time
  EXPECT_NEAR(static_cast<double>(pos) / 2000.0, 0.5, 3 * std::sqrt(0.25 / 2000));
}

TEST(Sample, FiringRatesWithinBinomialBound) {
  const auto w = generate_world(64, 256, 7);
  const std::size_t n = 10000;
  const auto s = sample_dataset(w, n, 1, 8);
  for (long f : {0L, 1L, 17L, 100L, 255L}) {
    const double p = w.firing_prob[static_cast<std::size_t>(f)];
    const double rate = s.firing.col(f).sum() / static_cast<double>(n);
    EXPECT_LE(std::abs(rate - p), 3 * std::sqrt(p * (1 - p) / static_cast<double>(n))) << "feature " << f;
  }
}

TEST(Sample, PureFunctionOfSeed) {
  const auto w = generate_world(8, 20, 9);
  const auto a = sample_dataset(w, 50, 2, 10), b = sample_dataset(w, 50, 2, 10), c = sample_dataset(w, 50, 2, 11);
  EXPECT_EQ(a.data.features, b.data.features);
  EXPECT_EQ(a.data.targets, b.data.targets);
  EXPECT_EQ(a.firing, b.firing);
  EXPECT_EQ(a.data.split, b.data.split);
  EXPECT_FALSE(a.data.features == c.data.features);
  EXPECT_EQ(a.data.split, default_split(50, 10));
}

TEST(Sample, VariableLengthPadsWithZeros) {
  const auto w = generate_world(8, 20, 12);
  const auto s = sample_dataset(w, 60, 5, 13, {0.2, true});
  bool some_padded = false;
  for (std::size_t e = 0; e < 60; ++e)
    for (std::size_t t = 0; t < s.data.features.first_valid(e); ++t) {
      some_padded = true;
      for (float v : s.data.features.token(e, t)) EXPECT_EQ(v, 0.0f);
    }
  EXPECT_TRUE(some_padded);
  s.data.validate();
}

TEST(OracleSae, NoiselessOrthogonalWorldRecoversFiringsExactly) {
  WorldOptions o;
  o.noise_sigma = 0;
  const auto w = generate_world(40, 30, 14, o);
  const auto oracle_enc = oracle_sae(w);
  for (double a : oracle_enc.agreement) EXPECT_EQ(a, 1.0);
  EXPECT_TRUE(oracle_enc.failed.empty());
  const auto s = sample_dataset(w, 500, 1, 15);
  const auto z = encode(s.data.features, oracle_enc.sae);
  EXPECT_EQ(z.values.cwiseMax(0.0).cwiseSign(), s.firing);
}

TEST(OracleSae, DefaultWorldAgreementAndSelection) {
  const auto w = generate_world(64, 256, 16);
  const auto oracle_enc = oracle_sae(w);
  EXPECT_EQ(oracle_enc.sae.kind, ActivationKind::JumpReLU);
  EXPECT_EQ(oracle_enc.sae.w_enc, Matrix(w.dictionary.transpose()));
  EXPECT_TRUE(oracle_enc.sae.b_enc.isZero(0));
  for (std::size_t i = 0; i < w.width(); ++i) EXPECT_GE(oracle_enc.agreement[i], 0.99) << "latent " << i;
  EXPECT_TRUE(oracle_enc.failed.empty());

  // agreement re-measured on fresh data
  const auto s = sample_dataset(w, 4000, 1, 17);
  const Matrix z = encode(s.data.features, oracle_enc.sae).values;
  for (long i = 0; i < 256; ++i) {
    std::size_t agree = 0;
    for (long r = 0; r < z.rows(); ++r) agree += (z(r, i) > 0) == (s.firing(r, i) > 0);
    EXPECT_GE(static_cast<double>(agree) / static_cast<double>(z.rows()), 0.98) << "latent " << i;
  }

  // mean-difference statistic singles out the target latent, by an explicit-loop oracle
  const auto small = sample_dataset(w, 256, 1, 18);
  const Matrix zs = encode(small.data.features, oracle_enc.sae).values;
  const auto top = oracle::full_sort_top_k(testing_util::to_rows(zs), small.data.targets, 2);
  EXPECT_EQ(top[0], 0u);
  EXPECT_EQ(select_top_k(zs, small.data.targets, 1).indices, Indices{0});
}

TEST(OracleSae, SingleLatentProbeIsNearPerfect) {
  const auto w = generate_world(64, 256, 19);
  const auto enc = oracle_sae(w);
  const auto s = sample_dataset(w, 1024, 1, 20);
  const Matrix z = encode(s.data.features, enc.sae).values;
  const auto& sp = s.data.split;
  const Indices pool = sp.pool();
  const auto sel = select_top_k(rows_at(z, pool), labels_at(s.data.targets, pool), 1);
  ASSERT_EQ(sel.indices, Indices{0});
  const Matrix feats = gather_columns(z, sel.indices);
  const auto m = train_logreg(rows_at(feats, pool), labels_at(s.data.targets, pool), Penalty::L1, 1.0);
  EXPECT_GE(auc(m.decision(rows_at(feats, sp.test)), labels_at(s.data.targets, sp.test)), 0.99);
}
