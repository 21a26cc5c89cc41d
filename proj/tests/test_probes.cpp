#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace sprobe;
using testing_util::random_labels;
using testing_util::random_matrix;

namespace {

double train_auc(const ProbeModel& m, const Matrix& x, const Labels& y) { return auc(score(m, x), y); }

/// Labels from a noisy linear rule, so the unpenalised optimum is finite.
Labels noisy_linear_labels(std::mt19937_64& rng, const Matrix& x) {
  Labels y(static_cast<std::size_t>(x.rows()));
  std::normal_distribution<double> g;
  for (long i = 0; i < x.rows(); ++i) y[static_cast<std::size_t>(i)] = x(i, 0) - 0.5 * x(i, 1) + 1.5 * g(rng) > 0;
  y[0] = 1;
  y[1] = 0;
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression

TEST(LogReg, SeparableDataLargeC) {
  std::mt19937_64 rng(1);
  Matrix x;
  Labels y;
  testing_util::blobs(rng, 60, 2, 4.0, x, y);
  for (auto pen : {Penalty::L1, Penalty::L2}) {
    const auto m = train_logreg(x, y, pen, 1e5);
    EXPECT_EQ(auc(m.decision(x), y), 1.0);
  }
}

TEST(LogReg, ShrinkageAndSparsityMonotone) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = random_matrix(rng, 80, 12);
    const Labels y = random_labels(rng, 80);
    for (auto pen : {Penalty::L1, Penalty::L2}) {
      const auto strong = train_logreg(x, y, pen, 1e-5);
      const auto weak = train_logreg(x, y, pen, 1e5);
      EXPECT_LT(strong.w.norm(), weak.w.norm());
      EXPECT_LE(strong.nonzeros(), weak.nonzeros());
    }
    EXPECT_EQ(train_logreg(x, y, Penalty::L1, 1e-5).nonzeros(), 0u);
  }
}

TEST(LogReg, OptimumBeatsRandomSearch) {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(rng, 20, 3);
  const Labels y = noisy_linear_labels(rng, x);
  for (auto pen : {Penalty::L1, Penalty::L2}) {
    const double c = 0.5;
    const auto m = train_logreg(x, y, pen, c);
    const Matrix z = m.standardizer.apply(x);
    auto objective = [&](const Vector& w, double b) {
      double s = 0;
      for (long i = 0; i < z.rows(); ++i) s += oracle::logloss(z.row(i).dot(w) + b, y[static_cast<std::size_t>(i)]);
      return s + (pen == Penalty::L2 ? 0.5 * w.squaredNorm() : w.lpNorm<1>()) / c;
    };
    const double at_opt = objective(m.w, m.b);
    EXPECT_NEAR(at_opt, logreg_objective(z, y, m.w, m.b, pen, c), 1e-9);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 10000; ++i) {
      Vector w(3);
      for (auto& v : w) v = u(rng);
      const double b = u(rng);
      ASSERT_LE(at_opt, objective(w, b) + 1e-9);
    }
    // local perturbations cannot improve either
    for (int i = 0; i < 200; ++i) {
      Vector w = m.w;
      for (auto& v : w) v += 1e-3 * u(rng);
      ASSERT_LE(at_opt, objective(w, m.b + 1e-3 * u(rng)) + 1e-12);
    }
  }
}

TEST(LogReg, L1SubgradientOptimality) {
  std::mt19937_64 rng(4);
  const Matrix x = random_matrix(rng, 120, 15);
  const Labels y = noisy_linear_labels(rng, x);
  const double c = 0.05;
  const auto m = train_logreg(x, y, Penalty::L1, c);
  ASSERT_TRUE(m.converged);
  const Matrix z = m.standardizer.apply(x);
  Vector r(z.rows());
  for (long i = 0; i < z.rows(); ++i) r[i] = sigmoid(z.row(i).dot(m.w) + m.b) - y[static_cast<std::size_t>(i)];
  const Vector g = z.transpose() * r;
  EXPECT_NEAR(r.sum(), 0.0, 1e-4);
  for (long j = 0; j < g.size(); ++j) {
    if (m.w[j] == 0) EXPECT_LE(std::abs(g[j]), 1 / c + 1e-4);
    else EXPECT_NEAR(g[j], -(m.w[j] > 0 ? 1 : -1) / c, 1e-4);
  }
  EXPECT_GT(m.nonzeros(), 0u);
  EXPECT_LT(m.nonzeros(), 15u);
}

TEST(LogReg, ScoreDefinitionAndErrors) {
  std::mt19937_64 rng(5);
  const Matrix x = random_matrix(rng, 30, 4);
  const Labels y = random_labels(rng, 30);
  const auto m = train_logreg(x, y, Penalty::L2, 1.0);
  const Matrix z = m.standardizer.apply(x);
  for (long i = 0; i < x.rows(); ++i) {
    double s = m.b;
    for (long j = 0; j < 4; ++j) s += m.w[j] * (x(i, j) - m.standardizer.mean[j]) / m.standardizer.scale[j];
    EXPECT_NEAR(m.decision(x)[i], s, 1e-12);
  }
  EXPECT_THROW(train_logreg(x, Labels(30, 1), Penalty::L2, 1.0), SingleClassError);
  EXPECT_THROW(train_logreg(x, y, Penalty::L2, 0.0), InvalidArgument);
  EXPECT_THROW(score(ProbeModel{m}, random_matrix(rng, 3, 5)), DimensionMismatch);
}

// ---------------------------------------------------------------------------
// PCA regression

TEST(PcaReg, FullComponentsMatchPlainLogReg) {
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(rng, 150, 6) * random_matrix(rng, 6, 6);
  const Labels y = noisy_linear_labels(rng, x);
  const auto pca = train_pca_reg(x, y, 6);
  const auto plain = train_logreg(x, y, Penalty::L2, std::numeric_limits<double>::infinity());
  const Matrix xt = random_matrix(rng, 200, 6);
  const Labels yt = noisy_linear_labels(rng, xt);
  EXPECT_NEAR(auc(pca.decision(xt), yt), auc(plain.decision(xt), yt), 1e-6);
  EXPECT_LT((pca.decision(xt) - plain.decision(xt)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(PcaReg, RankOnePreservesVariance) {
  std::mt19937_64 rng(7);
  const Matrix x = random_matrix(rng, 40, 1) * random_matrix(rng, 1, 5);
  const auto p = PcaProjection::fit(x, 1);
  const Matrix centred = x.rowwise() - x.colwise().mean();
  const Matrix back = p.transform(x) * p.components.transpose();
  EXPECT_LT((back - centred).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(PcaReg, ComponentsMatchJacobiOracle) {
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(rng, 50, 10) * random_matrix(rng, 10, 10);
  const auto p = PcaProjection::fit(x, 10);
  const auto [vals, vecs] = oracle::jacobi_eigen(oracle::covariance(testing_util::to_rows(x)));
  for (long c = 0; c < 10; ++c) {
    EXPECT_NEAR(p.variances[c], vals[c], 1e-8 * vals[0]);
    double dot = 0;
    for (long r = 0; r < 10; ++r) dot += p.components(r, c) * vecs[r][c];
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-8) << "component " << c;
  }
}

TEST(PcaReg, ComponentRange) {
  std::mt19937_64 rng(9);
  const Matrix x = random_matrix(rng, 8, 20);
  const Labels y = random_labels(rng, 8);
  EXPECT_NO_THROW(train_pca_reg(x, y, 8));
  EXPECT_THROW(train_pca_reg(x, y, 9), InvalidArgument);
  EXPECT_THROW(train_pca_reg(x, y, 0), InvalidArgument);
  EXPECT_EQ(pca_component_cap(500, 300), 100u);
}

// ---------------------------------------------------------------------------
// KNN

TEST(Knn, Examples) {
  std::mt19937_64 rng(10);
  const Matrix x = random_matrix(rng, 25, 3);
  const Labels y = random_labels(rng, 25);
  const auto one = train_knn(x, y, 1);
  const Vector s = one.decision(x);
  for (long i = 0; i < 25; ++i) EXPECT_EQ(s[i], y[static_cast<std::size_t>(i)]);
  const auto all = train_knn(x, y, 25);
  const double rate = static_cast<double>(count_positive(y)) / 25.0;
  for (double v : testing_util::to_std(all.decision(random_matrix(rng, 10, 3)))) EXPECT_DOUBLE_EQ(v, rate);
  EXPECT_THROW(train_knn(x, y, 0), InvalidArgument);
  EXPECT_THROW(train_knn(x, y, 26), InvalidArgument);
  Labels pos(25, 1);
  pos[24] = 0;
  EXPECT_EQ(train_knn(x, pos, 1).decision(x.topRows(1))[0], 1.0);
}

TEST(Knn, NeighboursMatchBruteForce) {
  std::mt19937_64 rng(11);
  const Matrix x = random_matrix(rng, 30, 4) * 3;
  const Labels y = random_labels(rng, 30);
  const auto m = train_knn(x, y, 5);
  // independent z-scoring with population statistics
  oracle::Mat zs = testing_util::to_rows(x);
  for (long j = 0; j < 4; ++j) {
    double mean = 0, var = 0;
    for (const auto& r : zs) mean += r[j] / 30;
    for (const auto& r : zs) var += (r[j] - mean) * (r[j] - mean) / 30;
    for (auto& r : zs) r[j] = (r[j] - mean) / std::sqrt(var);
  }
  const Matrix q = random_matrix(rng, 12, 4) * 3;
  for (long i = 0; i < q.rows(); ++i) {
    std::vector<double> qi(4);
    for (long j = 0; j < 4; ++j) qi[j] = (q(i, j) - m.standardizer.mean[j]) / m.standardizer.scale[j];
    EXPECT_EQ(m.neighbors(q.row(i)), oracle::knn(zs, qi, 5));
  }
}

// ---------------------------------------------------------------------------
// Boosted trees

TEST(Gbt, SingleStumpSeparates) {
  Matrix x(8, 2);
  x << 1, 5, 2, 3, 3, 1, 4, 2, 5, 7, 6, 0, 7, 9, 8, 4;
  const Labels y{0, 0, 0, 0, 1, 1, 1, 1};
  GbtParams p;
  p.n_estimators = 1;
  p.max_depth = 1;
  p.min_child_weight = 0;
  const auto m = train_gbt(x, y, p);
  ASSERT_EQ(m.trees.size(), 1u);
  EXPECT_EQ(m.trees[0].nodes[0].feature, 0);
  EXPECT_EQ(auc(m.decision(x), y), 1.0);
}

TEST(Gbt, ZeroLearningRateIsConstant) {
  std::mt19937_64 rng(12);
  const Matrix x = random_matrix(rng, 40, 3);
  const Labels y = random_labels(rng, 40);
  GbtParams p;
  p.learning_rate = 0;
  p.n_estimators = 10;
  const auto m = train_gbt(x, y, p);
  const Vector s = m.decision(x);
  EXPECT_TRUE((s.array() == m.base_score).all());
  EXPECT_EQ(auc(s, y), 0.5);
}

TEST(Gbt, BeatsBestSingleStump) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = random_matrix(rng, 40, 3);
    const Labels y = noisy_linear_labels(rng, x);
    GbtParams p;
    p.n_estimators = 5;
    p.max_depth = 2;
    p.learning_rate = 0.3;
    p.reg_lambda = 1.0;
    p.min_child_weight = 0;
    const auto m = train_gbt(x, y, p);
    const double loss = mean_logloss(m.decision(x), y);
    EXPECT_NEAR(loss, m.train_loss.back(), 1e-12);
    EXPECT_LE(loss, oracle::best_stump_logloss(testing_util::to_rows(x), y, 0.3, 1.0) + 1e-12);
  }
}

TEST(Gbt, TrainingLossNonIncreasing) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = random_matrix(rng, 120, 5);
    const Labels y = noisy_linear_labels(rng, x);
    const auto grid = gbt_grid(trial);
    for (const auto& h : grid) {
      auto p = std::get<GbtParams>(h);
      p.subsample = 1.0;  // sampled rows can raise the full-data loss
      p.n_estimators = 30;
      const auto m = train_gbt(x, y, p);
      for (std::size_t r = 1; r < m.train_loss.size(); ++r) ASSERT_LE(m.train_loss[r], m.train_loss[r - 1] + 1e-12);
    }
  }
}

TEST(Gbt, DeterministicWithSubsampling) {
  std::mt19937_64 rng(15);
  const Matrix x = random_matrix(rng, 90, 6);
  const Labels y = noisy_linear_labels(rng, x);
  for (const auto& h : gbt_grid(3)) {
    const auto& p = std::get<GbtParams>(h);
    const auto a = train_gbt(x, y, p), b = train_gbt(x, y, p);
    EXPECT_LT((a.decision(x) - b.decision(x)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

// ---------------------------------------------------------------------------
// MLP

TEST(Mlp, LearnsXor) {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1;
  const Labels y{0, 1, 1, 0};
  MlpParams p;
  p.depth = 1;
  p.width = 16;
  p.learning_rate = 1e-2;
  p.weight_decay = 1e-5;
  p.seed = 1;
  const auto m = train_mlp(x, y, p);
  EXPECT_EQ(auc(m.decision(x), y), 1.0);
}

TEST(Mlp, ZeroEpochsIsChance) {
  std::mt19937_64 rng(16);
  const Matrix x = random_matrix(rng, 400, 5);
  const Labels y = random_labels(rng, 400);
  MlpParams p;
  p.max_epochs = 0;
  const auto m = train_mlp(x, y, p);
  EXPECT_EQ(m.epochs_run, 0u);
  const double a = auc(m.decision(x), y);
  EXPECT_GT(a, 0.4);
  EXPECT_LT(a, 0.6);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  const Labels y = random_labels(rng, 12);
  for (std::size_t depth : {1, 2, 3})
    for (std::size_t width : {16, 32, 64}) {
      auto net = MlpNet::make(5, depth, width);
      Rng init(depth * 100 + width);
      net.init(init);
      const Matrix x = testing_util::kink_free_batch(net, 12, rng);
      Vector grad;
      net.loss_and_grad(net.params, x, y, 1e-3, grad);
      const Vector fd = oracle::finite_diff<Vector>(
          [&](const Vector& p) {
            Vector g;
            return net.loss_and_grad(p, x, y, 1e-3, g);
          },
          net.params, 1e-3);
      const double rel = (grad - fd).cwiseAbs().maxCoeff() / std::max(1e-8, fd.cwiseAbs().maxCoeff());
      EXPECT_LT(rel, 1e-4) << depth << "x" << width;
    }
}

TEST(Mlp, Deterministic) {
  std::mt19937_64 rng(18);
  const Matrix x = random_matrix(rng, 60, 4);
  const Labels y = noisy_linear_labels(rng, x);
  MlpParams p;
  p.seed = 99;
  p.max_epochs = 30;
  const auto a = train_mlp(x, y, p), b = train_mlp(x, y, p);
  EXPECT_LT((a.decision(x) - b.decision(x)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(train_mlp(x, Labels(60, 0), p), SingleClassError);
}

// ---------------------------------------------------------------------------
// Uniform contract

TEST(Probes, DeterministicBitExactForLinearFamilies) {
  std::mt19937_64 rng(19);
  const Matrix x = random_matrix(rng, 70, 6);
  const Labels y = noisy_linear_labels(rng, x);
  for (const Hyperparams& h : {Hyperparams{LogRegHp{Penalty::L1, 0.3}}, Hyperparams{LogRegHp{Penalty::L2, 3.0}},
                               Hyperparams{PcaHp{4}}, Hyperparams{KnnHp{7}}}) {
    const auto a = score(train_probe(h, x, y), x), b = score(train_probe(h, x, y), x);
    EXPECT_EQ(a, b);
  }
}

TEST(Probes, AffineRescalingLeavesRankingsUnchanged) {
  std::mt19937_64 rng(20);
  const Matrix x = random_matrix(rng, 80, 5);
  const Labels y = noisy_linear_labels(rng, x);
  const Matrix xt = random_matrix(rng, 50, 5);
  Vector scale(5), shift(5);
  scale << 3, 0.01, 100, 7, 0.5;
  shift << -4, 10, 0, 1e3, 2;
  auto affine = [&](const Matrix& m) {
    Matrix out = m * scale.asDiagonal();
    out.rowwise() += shift.transpose();
    return out;
  };
  auto ranks = [](const Vector& s) {
    std::vector<long> order(static_cast<std::size_t>(s.size()));
    std::iota(order.begin(), order.end(), 0L);
    std::stable_sort(order.begin(), order.end(), [&](long a, long b) { return s[a] < s[b]; });
    return order;
  };
  for (const Hyperparams& h : {Hyperparams{LogRegHp{Penalty::L2, 1.0}}, Hyperparams{LogRegHp{Penalty::L1, 1.0}},
                               Hyperparams{PcaHp{3}}, Hyperparams{KnnHp{9}}}) {
    const Vector a = score(train_probe(h, x, y), xt);
    const Vector b = score(train_probe(h, affine(x), y), affine(xt));
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);
    if (family_of(h) != Family::KNN) EXPECT_EQ(ranks(a), ranks(b));
  }
}

TEST(Probes, JsonRoundTripPreservesScores) {
  std::mt19937_64 rng(21);
  const Matrix x = random_matrix(rng, 50, 4);
  const Labels y = noisy_linear_labels(rng, x);
  MlpParams mp;
  mp.max_epochs = 5;
  GbtParams gp;
  gp.n_estimators = 5;
  gp.subsample = 0.8;
  for (const Hyperparams& h :
       {Hyperparams{LogRegHp{Penalty::L1, 0.3}}, Hyperparams{LogRegHp{Penalty::L2, std::numeric_limits<double>::infinity()}},
        Hyperparams{PcaHp{2}}, Hyperparams{KnnHp{3}}, Hyperparams{gp}, Hyperparams{mp}}) {
    const auto m = train_probe(h, x, y);
    const auto j = nlohmann::json::parse(model_to_json(m).dump());
    const auto back = model_from_json(j);
    EXPECT_EQ(family_of(back), family_of(h));
    EXPECT_EQ(score(back, x), score(m, x)) << to_string(family_of(h));
    EXPECT_EQ(hp_string(hyperparameters_of(back)), hp_string(h));
  }
  EXPECT_THROW(model_from_json(nlohmann::json{{"family", "tree"}}), FormatError);
}

TEST(Grids, TenCandidatesWithinRanges) {
  EXPECT_EQ(logreg_grid(Penalty::L2).size(), 10u);
  EXPECT_DOUBLE_EQ(std::get<LogRegHp>(logreg_grid(Penalty::L1).front()).c, 1e5);
  EXPECT_NEAR(std::get<LogRegHp>(logreg_grid(Penalty::L1).back()).c, 1e-5, 1e-20);
  EXPECT_EQ(pca_grid(1000, 500).size(), 10u);
  EXPECT_EQ(std::get<PcaHp>(pca_grid(1000, 500).back()).n_components, 100u);
  EXPECT_EQ(knn_grid(1000).size(), 10u);
  EXPECT_EQ(std::get<KnnHp>(knn_grid(50).back()).n_neighbors, 49u);
  // small caps clamp and deduplicate
  EXPECT_EQ(knn_grid(4).size(), 3u);
  EXPECT_EQ(gbt_grid(1).size(), 10u);
  for (const auto& h : gbt_grid(1)) {
    const auto& p = std::get<GbtParams>(h);
    EXPECT_EQ(p.n_estimators % 50, 0u);
    EXPECT_GE(p.max_depth, 2u);
    EXPECT_LE(p.max_depth, 5u);
    EXPECT_GE(p.learning_rate, 1e-3);
    EXPECT_LE(p.learning_rate, 0.1);
    EXPECT_GE(p.subsample, 0.7);
    EXPECT_GE(p.reg_lambda, 1e-3);
    EXPECT_LE(p.reg_alpha, 10);
    EXPECT_GE(p.min_child_weight, 1);
    EXPECT_LE(p.min_child_weight, 9);
  }
  const auto m1 = mlp_grid(5), m2 = mlp_grid(5);
  EXPECT_EQ(m1.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(hp_string(m1[i]), hp_string(m2[i]));
}
