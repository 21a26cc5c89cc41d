#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"

using namespace sprobe;

namespace {

LabeledDataset make_dataset(std::uint64_t seed, std::size_t n = 600, double pos_rate = 0.5) {
  std::mt19937_64 rng(seed);
  LabeledDataset d;
  d.id = "toy";
  d.features = ActivationTensor::from_matrix(testing_util::random_matrix(rng, static_cast<long>(n), 3));
  d.targets = testing_util::random_labels(rng, n, pos_rate);
  d.split = default_split(n, seed);
  d.validate();
  return d;
}

double positive_rate(const Labels& y, const Indices& idx) {
  double s = 0;
  for (auto i : idx) s += y[i];
  return s / static_cast<double>(idx.size());
}

// Flip positions recomputed from the seed by a hand-written Fisher-Yates shuffle.
std::set<std::size_t> expected_flips(std::size_t pool, double fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> p(pool);
  for (std::size_t i = 0; i < pool; ++i) p[i] = i;
  for (std::size_t i = pool; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool) + 1e-9));
  return {p.begin(), p.begin() + static_cast<std::ptrdiff_t>(count)};
}

EvalRecord rec(double val, double test, bool sae = false, std::size_t width = 0, std::size_t k = 0) {
  EvalRecord r;
  r.dataset_id = "d";
  r.auc_val = val;
  r.auc_test = test;
  r.method.family = "logreg";
  r.method.is_sae = sae;
  r.method.width = width;
  r.method.k = k;
  if (sae) r.method.features = "sae" + std::to_string(width);
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Grids

TEST(Grids, Scarcity) {
  const auto g = scarcity_grid();
  ASSERT_EQ(g.size(), 20u);
  EXPECT_EQ(g.front(), 2u);
  EXPECT_EQ(g.back(), 1024u);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1], g[i]);
  // roughly geometric: every step is within a factor of two of the ideal ratio 512^(1/19)
  const double ratio = std::pow(512.0, 1.0 / 19.0);
  for (std::size_t i = 1; i < g.size(); ++i)
    EXPECT_NEAR(static_cast<double>(g[i]), 2.0 * std::pow(ratio, static_cast<double>(i)), std::max(1.0, 0.02 * g[i]));
}

TEST(Grids, ImbalanceAndNoise) {
  const auto r = imbalance_grid();
  ASSERT_EQ(r.size(), 19u);
  EXPECT_DOUBLE_EQ(r.front(), 0.05);
  EXPECT_DOUBLE_EQ(r.back(), 0.95);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_NEAR(r[i] - r[i - 1], 0.05, 1e-12);
  const auto f = noise_grid();
  ASSERT_EQ(f.size(), 11u);
  EXPECT_EQ(f.front(), 0.0);
  EXPECT_DOUBLE_EQ(f.back(), 0.5);
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_NEAR(f[i] - f[i - 1], 0.05, 1e-12);
}

// ---------------------------------------------------------------------------
// apply_regime

TEST(ApplyRegime, IdentityCases) {
  const auto d = make_dataset(1);
  for (const auto& spec : {RegimeSpec{RegimeKind::Standard, 0, 3}, RegimeSpec{RegimeKind::LabelNoise, 0.0, 3},
                           RegimeSpec{RegimeKind::Scarcity, static_cast<double>(d.split.pool().size()), 3}}) {
    const auto out = apply_regime(d, spec);
    EXPECT_EQ(out.targets, d.targets) << to_string(spec.kind);
    EXPECT_EQ(out.split, d.split) << to_string(spec.kind);
    EXPECT_EQ(out.features, d.features);
  }
}

TEST(ApplyRegime, NoiseFlipsRecomputedSet) {
  const auto d = make_dataset(2, 220);  // default split leaves 120 in the pool
  const Indices pool = d.split.pool();
  for (double fraction : noise_grid()) {
    const auto out = apply_regime(d, {RegimeKind::LabelNoise, fraction, 99});
    const auto want = expected_flips(pool.size(), fraction, 99);
    std::set<std::size_t> got;
    for (std::size_t p = 0; p < pool.size(); ++p)
      if (out.targets[pool[p]] != d.targets[pool[p]]) got.insert(p);
    EXPECT_EQ(got, want) << fraction;
    for (auto t : d.split.test) ASSERT_EQ(out.targets[t], d.targets[t]);
    EXPECT_EQ(out.split, d.split);
  }
}

TEST(ApplyRegime, HalfNoiseOnHundredExamples) {
  LabeledDataset d;
  std::mt19937_64 rng(3);
  d.features = ActivationTensor::from_matrix(testing_util::random_matrix(rng, 200, 2));
  d.targets = testing_util::random_labels(rng, 200);
  for (std::size_t i = 0; i < 200; ++i) (i < 80 ? d.split.train : i < 100 ? d.split.val : d.split.test).push_back(i);
  const auto out = apply_regime(d, {RegimeKind::LabelNoise, 0.5, 7});
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < 100; ++i) flipped += out.targets[i] != d.targets[i];
  EXPECT_EQ(flipped, 50u);
  std::set<std::size_t> got;
  for (std::size_t i = 0; i < 100; ++i)
    if (out.targets[i] != d.targets[i]) got.insert(i);
  EXPECT_EQ(got, expected_flips(100, 0.5, 7));
  for (std::size_t i = 100; i < 200; ++i) EXPECT_EQ(out.targets[i], d.targets[i]);
}

TEST(ApplyRegime, ScarcityBalancedSubsample) {
  const auto d = make_dataset(4);
  const Indices pool = d.split.pool();
  const std::set<std::size_t> pool_set(pool.begin(), pool.end());
  for (auto n : scarcity_grid()) {
    if (n > pool.size()) {
      EXPECT_THROW(apply_regime(d, {RegimeKind::Scarcity, static_cast<double>(n), 5}), InfeasibleRegime);
      continue;
    }
    const auto out = apply_regime(d, {RegimeKind::Scarcity, static_cast<double>(n), 5});
    EXPECT_EQ(out.split.test, d.split.test);
    if (n == pool.size()) continue;
    ASSERT_EQ(out.split.train.size(), n);
    EXPECT_TRUE(out.split.val.empty());
    std::size_t pos = 0;
    for (auto i : out.split.train) {
      EXPECT_TRUE(pool_set.count(i));
      pos += static_cast<std::size_t>(d.targets[i]);
    }
    EXPECT_EQ(pos, n / 2) << n;
    EXPECT_EQ(out.targets, d.targets);
  }
}

TEST(ApplyRegime, ImbalanceRateBound) {
  const auto d = make_dataset(5, 1500);
  std::size_t common_total = 0;
  for (double ratio : imbalance_grid()) {
    const auto out = apply_regime(d, {RegimeKind::Imbalance, ratio, 11});
    const auto n_train = out.split.train.size();
    if (common_total == 0) common_total = n_train;
    EXPECT_EQ(n_train, common_total) << "total train size held fixed";
    EXPECT_LE(std::abs(positive_rate(out.targets, out.split.train) - ratio), 1.0 / static_cast<double>(n_train)) << ratio;
    EXPECT_LE(std::abs(positive_rate(out.targets, out.split.test) - ratio), 1.0 / static_cast<double>(out.split.test.size()))
        << ratio;
    EXPECT_TRUE(out.split.val.empty());
    out.validate();
  }
}

TEST(ApplyRegime, ImbalanceInfeasible) {
  auto d = make_dataset(6, 400);
  RegimeSpec spec{RegimeKind::Imbalance, 0.95, 1, 10000};
  EXPECT_THROW(apply_regime(d, spec), InfeasibleRegime);
}

TEST(ApplyRegime, InvalidSpecs) {
  const auto d = make_dataset(7);
  EXPECT_THROW(apply_regime(d, {RegimeKind::Scarcity, 1, 0}), InvalidArgument);
  EXPECT_THROW(apply_regime(d, {RegimeKind::Scarcity, 2048, 0}), InvalidArgument);
  EXPECT_THROW(apply_regime(d, {RegimeKind::Scarcity, 2.5, 0}), InvalidArgument);
  EXPECT_THROW(apply_regime(d, {RegimeKind::Imbalance, 0.01, 0}), InvalidArgument);
  EXPECT_THROW(apply_regime(d, {RegimeKind::LabelNoise, 0.6, 0}), InvalidArgument);
  EXPECT_THROW(apply_regime(d, {RegimeKind::CovariateShift, 0, 0}), InfeasibleRegime);
  EXPECT_THROW(regime_from_string("drift"), InvalidArgument);
}

TEST(ApplyRegime, CovariateShiftReplacesTest) {
  auto d = make_dataset(8);
  auto ood = std::make_shared<LabeledDataset>(make_dataset(9, 450));
  ood->split = {{}, {}, {}};
  for (std::size_t i = 0; i < ood->size(); ++i) ood->split.test.push_back(i);
  d.ood = ood;
  const auto out = apply_regime(d, {RegimeKind::CovariateShift, 0, 12});
  EXPECT_EQ(out.split.train, d.split.train);
  EXPECT_EQ(out.split.val, d.split.val);
  ASSERT_EQ(out.split.test.size(), 300u);
  // every test row is a verbatim OOD example with its own label
  for (auto t : out.split.test) {
    const auto row = out.features.token(t, 0);
    bool found = false;
    for (std::size_t j = 0; j < ood->size() && !found; ++j) {
      const auto o = ood->features.token(j, 0);
      found = std::equal(row.begin(), row.end(), o.begin()) && ood->targets[j] == out.targets[t];
    }
    EXPECT_TRUE(found);
  }
  out.validate();
}

TEST(ApplyRegime, Deterministic) {
  const auto d = make_dataset(10);
  for (const auto& spec : {RegimeSpec{RegimeKind::Scarcity, 17, 3}, RegimeSpec{RegimeKind::Imbalance, 0.2, 3},
                           RegimeSpec{RegimeKind::LabelNoise, 0.3, 3}}) {
    const auto a = apply_regime(d, spec), b = apply_regime(d, spec);
    EXPECT_EQ(a.targets, b.targets);
    EXPECT_EQ(a.split, b.split);
    auto other = spec;
    other.seed = 4;
    const auto c = apply_regime(d, other);
    EXPECT_TRUE(c.targets != a.targets || !(c.split == a.split)) << to_string(spec.kind);
  }
}

// ---------------------------------------------------------------------------
// Quiver of arrows

TEST(Quiver, Examples) {
  const auto r = quiver_select({rec(0.90, 0.1), rec(0.95, 0.2), rec(0.93, 0.3)});
  EXPECT_EQ(r.chosen, 1u);
  EXPECT_EQ(r.auc_test, 0.2);
  EXPECT_FALSE(r.tie_break_applied);

  const auto s = quiver_select({rec(1.0, 0.7), rec(1.0, 0.6, true, 16384, 16)});
  EXPECT_EQ(s.chosen, 1u);
  EXPECT_TRUE(s.tie_break_applied);

  const auto w = quiver_select({rec(0.9, 0.1, true, 131072, 16), rec(0.9, 0.2, true, 16384, 16)});
  EXPECT_EQ(w.chosen_record().method.width, 16384u);

  const auto k = quiver_select({rec(0.9, 0.1, true, 16384, 16), rec(0.9, 0.2, true, 16384, 128), rec(0.9, 0.3, true, 16384, 1)});
  EXPECT_EQ(k.chosen_record().method.k, 128u);

  const auto first = quiver_select({rec(0.8, 0.1), rec(0.8, 0.2)});
  EXPECT_EQ(first.chosen, 0u);
  EXPECT_TRUE(first.tie_break_applied);

  EXPECT_THROW(quiver_select({}), InvalidArgument);
}

TEST(Quiver, MaximalValidationProperty) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> len(1, 12), coarse(0, 4), flag(0, 1), wpick(0, 2), kpick(0, 2);
  const std::size_t widths[] = {16384, 65536, 131072}, ks[] = {1, 16, 128};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EvalRecord> list;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      const bool sae = flag(rng);
      list.push_back(rec(0.5 + 0.1 * coarse(rng), std::uniform_real_distribution<double>(0, 1)(rng), sae,
                         sae ? widths[wpick(rng)] : 0, sae ? ks[kpick(rng)] : 0));
    }
    const auto r = quiver_select(list);
    double best = 0;
    for (const auto& x : list) best = std::max(best, x.auc_val);
    ASSERT_EQ(r.chosen_record().auc_val, best);
    ASSERT_EQ(r.auc_test, list[r.chosen].auc_test);
    // independent tie-break oracle: lexicographic key over tied records
    std::size_t want = list.size();
    auto key = [&](const EvalRecord& x, std::size_t i) {
      return std::make_tuple(x.method.is_sae ? 0 : 1, x.method.is_sae ? x.method.width : 0,
                             x.method.is_sae ? -static_cast<long>(x.method.k) : 0L, i);
    };
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i].auc_val == best && (want == list.size() || key(list[i], i) < key(list[want], want))) want = i;
    ASSERT_EQ(r.chosen, want);

    // a strictly worse arrow never changes the selection
    auto more = list;
    more.push_back(rec(best - 0.05, 0.99, true, 16384, 128));
    ASSERT_EQ(quiver_select(more).chosen, r.chosen);
  }
}

TEST(HeadToHead, Differences) {
  const auto a = rec(0.9, 0.9), b = rec(0.7, 0.8);
  EXPECT_EQ(head_to_head(a, a), 0.0);
  EXPECT_NEAR(head_to_head(a, b), 0.1, 1e-15);
  auto c = b;
  c.regime = "noise";
  EXPECT_THROW(head_to_head(a, c), InvalidArgument);
  c = b;
  c.dataset_id = "other";
  EXPECT_THROW(head_to_head(a, c), InvalidArgument);
}
