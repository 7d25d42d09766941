#include <gtest/gtest.h>

#include <cmath>

#include "npsnet/eval/metrics.hpp"
#include "support/metric_oracle.hpp"

using namespace npsnet;

namespace {

FixationSet fixations(std::initializer_list<std::pair<int, int>> xy) {
  FixationSet f;
  for (auto [x, y] : xy) f.points.push_back({x, y, 0});
  return f;
}

}  // namespace

TEST(Metrics, NssOfSinglePeak) {
  // mean 0.25, sd sqrt(3)/4, z = 0.75 / (sqrt(3)/4) = sqrt(3)
  SaliencyMap p(2, 2, {0, 0, 0, 1});
  EXPECT_NEAR(*nss(p, fixations({{1, 1}})), std::sqrt(3.0), 1e-12);
}

TEST(Metrics, NssCountsEachPixelOnce) {
  SaliencyMap p(2, 2, {0, 0, 0, 1});
  FixationSet f = fixations({{1, 1}, {1, 1}, {1, 1}, {0, 0}});
  // distinct pixels {3, 0}: (sqrt(3) + (-0.25)/(sqrt(3)/4)) / 2
  EXPECT_NEAR(*nss(p, f), (std::sqrt(3.0) - 1.0 / std::sqrt(3.0)) / 2, 1e-12);
}

TEST(Metrics, NssConstantMapAndNoFixations) {
  SaliencyMap p(2, 3, 0.4);
  EXPECT_EQ(*nss(p, fixations({{0, 0}})), 0.0);
  EXPECT_FALSE(nss(p, fixations({{5, 5}})).has_value());
}

TEST(Metrics, CcHandValue) {
  // deviations (.75,-.25,-.25,-.25) and (.5,.5,-.5,-.5): .5 / sqrt(.75 * 1)
  SaliencyMap p(2, 2, {1, 0, 0, 0}), q(2, 2, {1, 1, 0, 0});
  EXPECT_NEAR(cc(p, q), 1.0 / std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(cc(p, p), 1.0, 1e-12);
}

TEST(Metrics, CcRejectsExtentMismatch) {
  EXPECT_THROW(cc(SaliencyMap(2, 2, 1.0), SaliencyMap(2, 3, 1.0)), DimensionError);
}

TEST(Metrics, SimHandValue) {
  SaliencyMap p(1, 2, {0.2, 0.8}), q(1, 2, {5, 5});
  EXPECT_NEAR(sim(p, q), 0.7, 1e-12);
  EXPECT_THROW(sim(p, SaliencyMap(1, 2, 0.0)), InputError);
}

TEST(Metrics, AucJuddHandValue) {
  // positives .9 and .3, negatives .1 and .5:
  // (0,0) -> (0,.5) -> (.5,1) -> (1,1) = .375 + .5
  SaliencyMap p(2, 2, {0.9, 0.1, 0.5, 0.3});
  EXPECT_NEAR(*auc_judd(p, fixations({{0, 0}, {1, 1}})), 0.875, 1e-12);
}

TEST(Metrics, AucJuddUndefinedWithoutNegatives) {
  SaliencyMap p(1, 2, {0.9, 0.1});
  EXPECT_FALSE(auc_judd(p, fixations({{0, 0}, {1, 0}})).has_value());
  EXPECT_FALSE(auc_judd(p, FixationSet{}).has_value());
}

TEST(Metrics, RocAucCountsTiesHalf) {
  EXPECT_NEAR(roc_auc({0.9, 0.3}, {0.1, 0.5}), 0.75, 1e-12);
  EXPECT_NEAR(roc_auc({0.5}, {0.5}), 0.5, 1e-12);
  EXPECT_THROW(roc_auc({}, {1.0}), UsageError);
}

TEST(Metrics, ShuffledAucOfCenterPriorIsChance) {
  // Negatives drawn from the same distribution as positives: a map that only
  // encodes that shared distribution cannot separate them.
  SaliencyMap p(1, 4, {1, 1, 1, 1});
  std::vector<FixationSet> pool{fixations({{2, 0}, {3, 0}})};
  EXPECT_NEAR(*s_auc(p, fixations({{0, 0}, {1, 0}}), pool, 10, 3), 0.5, 1e-12);
}

TEST(Metrics, ShuffledAucIsSeedDeterministic) {
  SaliencyMap p(2, 3, {0.1, 0.9, 0.3, 0.4, 0.2, 0.7});
  std::vector<FixationSet> pool{fixations({{0, 0}, {2, 0}, {0, 1}, {1, 1}})};
  const auto f = fixations({{1, 0}, {2, 1}});
  EXPECT_EQ(*s_auc(p, f, pool, 7, 11), *s_auc(p, f, pool, 7, 11));
  EXPECT_THROW(s_auc(p, f, pool, 0, 1), ConfigError);
  EXPECT_THROW(s_auc(p, f, {}, 1, 1), InputError);
  EXPECT_THROW(s_auc(p, f, {fixations({{1, 0}})}, 1, 1), InputError);
}

TEST(Metrics, AggregateWeightsDomainsByFrames) {
  std::vector<DomainResult> parts{{"cartoon", 3, {0.9, 0.9, 0.9, 0.9, 0.9}}, {"game", 1, {0.6, 0.6, 0.6, 0.6, 0.6}}};
  const auto m = aggregate(parts);
  EXPECT_NEAR(m.auc_j, 0.825, 1e-12);
  EXPECT_NEAR(m.nss, 0.825, 1e-12);
  EXPECT_THROW(aggregate({}), InputError);
}

TEST(Metrics, LibraryMatchesBruteForceOracle) {
  const auto rep = npsnet::testing::run_metric_oracle_cases(300, 42);
  EXPECT_EQ(rep.cases, 300u);
  EXPECT_TRUE(rep.failures.empty()) << rep.failures.front();
  EXPECT_LT(rep.max_error, 1e-9);
}

TEST(Metrics, CcOfConstantMapIsZero) {
  SaliencyMap p(2, 3, 0.4), q(2, 3, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(cc(p, q), 0.0);
  EXPECT_EQ(cc(q, p), 0.0);
}

TEST(Metrics, CcOfFlatVectors) {
  // deviations (-1.5,-.5,.5,1.5) and (-1.25,-.25,-.25,1.75): 4.5 / sqrt(5 * 4.75)
  SaliencyMap p(1, 4, {1, 2, 3, 4}), q(1, 4, {1, 2, 2, 4});
  EXPECT_NEAR(cc(p, q), 9.0 / std::sqrt(95.0), 1e-10);
  SaliencyMap r(1, 4, {9, 8, 7, 6});
  EXPECT_NEAR(cc(p, r), -1.0, 1e-12);
}

TEST(Metrics, NssOfTwoByTwoPeak) {
  // (1 - .25) / sqrt(.1875)
  EXPECT_NEAR(*nss(SaliencyMap(2, 2, {1, 0, 0, 0}), fixations({{0, 0}})), std::sqrt(3.0), 1e-10);
  EXPECT_NEAR(*nss(SaliencyMap(2, 2, {1, 1, 0, 0}), fixations({{0, 0}, {1, 0}})), 1.0, 1e-10);
}

TEST(Metrics, AucEndpoints) {
  SaliencyMap peak(3, 3, 0.1);
  peak.at(1, 1) = 1.0;
  peak.at(0, 2) = 0.9;
  EXPECT_NEAR(*auc_judd(peak, fixations({{1, 1}, {2, 0}})), 1.0, 1e-12);
  EXPECT_NEAR(*auc_judd(SaliencyMap(3, 3, 0.5), fixations({{1, 1}})), 0.5, 1e-12);
  EXPECT_NEAR(*s_auc(peak, fixations({{1, 1}}), {fixations({{0, 0}, {2, 2}})}, 5, 3), 1.0, 1e-12);
}

TEST(Metrics, AggregateOfUnequalDomains) {
  std::vector<DomainResult> parts{{"cartoon", 100, {0.8537, 0, 0, 0, 0}}, {"game", 300, {0.8913, 0, 0, 0, 0}}};
  EXPECT_NEAR(aggregate(parts).auc_j, 0.8819, 1e-12);
  std::vector<DomainResult> only{{"cartoon", 1, {0.7, 0, 0, 0, 0}}, {"game", 0, {0.1, 0, 0, 0, 0}}};
  EXPECT_NEAR(aggregate(only).auc_j, 0.7, 1e-12);
}

TEST(Metrics, InvariantUnderRescaling) {
  Rng rng(17);
  for (int c = 0; c < 50; ++c) {
    SaliencyMap p(5, 6, 0.0), q(5, 6, 0.0);
    for (auto& v : p.values) v = rng.uniform(0.01, 1.0);
    for (auto& v : q.values) v = rng.uniform(0.01, 1.0);
    FixationSet f = fixations({{static_cast<int>(rng.below(6)), static_cast<int>(rng.below(5))},
                               {static_cast<int>(rng.below(6)), static_cast<int>(rng.below(5))}});
    std::vector<FixationSet> pool{fixations({{0, 0}, {5, 4}, {3, 2}, {1, 3}})};
    SaliencyMap affine = p, cubed = p, scaled = p;
    for (auto& v : affine.values) v = 3.0 * v + 2.0;
    for (auto& v : cubed.values) v = v * v * v;
    for (auto& v : scaled.values) v *= 7.5;
    if (auto a = auc_judd(p, f)) EXPECT_NEAR(*a, *auc_judd(cubed, f), 1e-12);
    const auto sa = s_auc(p, f, pool, 4, 9), sc = s_auc(cubed, f, pool, 4, 9);
    if (sa && sc) EXPECT_NEAR(*sa, *sc, 1e-12);
    EXPECT_NEAR(*nss(p, f), *nss(affine, f), 1e-9);
    EXPECT_NEAR(cc(p, q), cc(affine, q), 1e-12);
    EXPECT_NEAR(sim(p, q), sim(scaled, q), 1e-12);
  }
}

TEST(Metrics, SmallMapsMatchOracleExactly) {
  const auto rep = npsnet::testing::run_metric_oracle_cases(200, 5, 1e-12, npsnet::testing::kSmallOracleCases);
  EXPECT_TRUE(rep.failures.empty()) << rep.failures.front();
}
