#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "fedselect/baselines.hpp"
#include "fedselect/mask.hpp"

namespace fedselect {
namespace {

BinaryMask random_mask(std::size_t d, std::mt19937_64& rng, double density = 0.5) {
  std::bernoulli_distribution bit(density);
  BinaryMask m(d);
  for (std::size_t i = 0; i < d; ++i) m.set(i, bit(rng));
  return m;
}

std::vector<std::size_t> sort_oracle(const std::vector<double>& delta, const BinaryMask& eligible, std::size_t c,
                                     bool largest) {
  std::vector<std::size_t> idx = eligible.indices();
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return largest ? delta[a] > delta[b] : delta[a] < delta[b];
  });
  idx.resize(std::min(c, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

TEST(Invert, Basics) {
  EXPECT_EQ(invert(BinaryMask::from_bits({1, 0, 1})), BinaryMask::from_bits({0, 1, 0}));
  EXPECT_EQ(invert(BinaryMask(5)), BinaryMask(5, true));
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const BinaryMask m = random_mask(37, rng);
    EXPECT_EQ(invert(invert(m)), m);
  }
}

TEST(Or, BasicsAndMonotonicity) {
  EXPECT_EQ(BinaryMask::from_bits({1, 0}) | BinaryMask::from_bits({0, 0}), BinaryMask::from_bits({1, 0}));
  EXPECT_THROW(BinaryMask(2) | BinaryMask(3), InternalError);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const BinaryMask a = random_mask(40, rng), b = random_mask(40, rng, 0.2);
    EXPECT_EQ(a | a, a);
    EXPECT_GE((a | b).popcount(), std::max(a.popcount(), b.popcount()));
    EXPECT_TRUE(is_subset(a, a | b));
  }
}

TEST(PersonalizedFraction, Values) {
  EXPECT_EQ(personalized_fraction(BinaryMask(8)), 0.0);
  EXPECT_EQ(personalized_fraction(BinaryMask(8, true)), 1.0);
  EXPECT_EQ(personalized_fraction(BinaryMask::from_bits({1, 1, 0, 0})), 0.5);
}

TEST(SelectTopP, PicksLargest) {
  const std::vector<double> delta{0.5, 0.1, 0.9, 0.3};
  const Selection s = select_top_p(delta, BinaryMask(4, true), 0.5);
  EXPECT_EQ(s.mask.indices(), (std::vector<std::size_t>{0, 2}));
  EXPECT_FALSE(s.no_eligible);
}

TEST(SelectTopP, FullRateSelectsEligible) {
  const std::vector<double> delta{0.5, 0.1, 0.9, 0.3, 0.0};
  const BinaryMask eligible = BinaryMask::from_bits({1, 0, 1, 1, 0});
  EXPECT_EQ(select_top_p(delta, eligible, 1.0).mask, eligible);
}

TEST(SelectTopP, TiesGoToLowerIndex) {
  const std::vector<double> delta(4, 0.25);
  EXPECT_EQ(select_top_p(delta, BinaryMask(4, true), 0.5).mask.indices(), (std::vector<std::size_t>{0, 1}));
}

TEST(SelectTopP, EmptyEligibleIsFlaggedNoOp) {
  const std::vector<double> delta{1.0, 2.0};
  const Selection s = select_top_p(delta, BinaryMask(2), 0.5);
  EXPECT_TRUE(s.no_eligible);
  EXPECT_TRUE(s.mask.none());
}

TEST(SelectTopP, CountUsesCeilingWithMinimumOne) {
  std::vector<double> delta(100);
  std::iota(delta.begin(), delta.end(), 0.0);
  EXPECT_EQ(select_top_p(delta, BinaryMask(100, true), 0.05).mask.popcount(), 5u);  // 0.05*100 exactly 5
  EXPECT_EQ(select_top_p(delta, BinaryMask(100, true), 0.001).mask.popcount(), 1u);
  EXPECT_EQ(select_top_p(delta, BinaryMask(100, true), 0.333).mask.popcount(), 34u);
  EXPECT_THROW(select_top_p(delta, BinaryMask(100, true), 0.0), ConfigError);
}

TEST(SelectTopP, MatchesSortOracleOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 6);  // coarse values force ties
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 1 + rng() % 60;
    std::vector<double> delta(d);
    for (double& v : delta) v = 0.1 * level(rng);
    const BinaryMask eligible = random_mask(d, rng, 0.6);
    const double p = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    const Selection s = select_top_p(delta, eligible, p);
    const std::size_t n = eligible.popcount();
    const std::size_t c = n == 0 ? 0 : std::max<std::size_t>(1, ceil_count(p, n));
    EXPECT_EQ(s.mask.popcount(), c);
    EXPECT_TRUE(is_subset(s.mask, eligible));
    EXPECT_EQ(s.mask.indices(), sort_oracle(delta, eligible, c, true));
    EXPECT_EQ(select_top_p(delta, eligible, p).mask, s.mask);
  }
}

TEST(SelectTopP, OrGrowthIsMonotone) {
  std::mt19937_64 rng(4);
  BinaryMask m(200);
  double last = 0.0;
  for (int step = 0; step < 30; ++step) {
    std::vector<double> delta(200);
    for (double& v : delta) v = std::uniform_real_distribution<double>(0, 1)(rng);
    m = m | select_top_p(delta, invert(m), 0.1).mask;
    EXPECT_GE(personalized_fraction(m), last);
    last = personalized_fraction(m);
  }
}

TEST(PersonalizeLeast, PicksSmallest) {
  const std::vector<double> delta{0.5, 0.1, 0.9, 0.3};
  EXPECT_EQ(personalize_least_select(delta, BinaryMask(4, true), 0.5).mask.indices(),
            (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(personalize_least_select(delta, BinaryMask(4, true), 1.0).mask, BinaryMask(4, true));
}

TEST(PersonalizeLeast, DisjointFromTopHalfOnDistinctValues) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> delta(20);
    std::iota(delta.begin(), delta.end(), 1.0);
    std::shuffle(delta.begin(), delta.end(), rng);
    const BinaryMask all(20, true);
    const auto top = select_top_p(delta, all, 0.5).mask;
    const auto least = personalize_least_select(delta, all, 0.5).mask;
    EXPECT_TRUE((top & least).none());
    EXPECT_EQ(sort_oracle(delta, all, 10, false), least.indices());
  }
}

TEST(Iou, Values) {
  EXPECT_DOUBLE_EQ(iou(BinaryMask::from_bits({1, 1, 0, 0}), BinaryMask::from_bits({1, 0, 1, 0})), 1.0 / 3.0);
  EXPECT_EQ(iou(BinaryMask::from_bits({1, 0, 1}), BinaryMask::from_bits({1, 0, 1})), 1.0);
  EXPECT_EQ(iou(BinaryMask::from_bits({1, 0, 0}), BinaryMask::from_bits({0, 1, 1})), 0.0);
  EXPECT_EQ(iou(BinaryMask(3), BinaryMask(3)), 1.0);
}

TEST(Iou, SymmetricAndOneOnlyForEqualMasks) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const BinaryMask a = random_mask(12, rng), b = random_mask(12, rng);
    EXPECT_EQ(iou(a, b), iou(b, a));
    if (!a.none() && !b.none()) {
      EXPECT_EQ(iou(a, b) == 1.0, a == b);
    }
  }
}

TEST(LayerMask, CoversSpans) {
  const Architecture arch = Architecture::mlp(2, {3}, 2);
  const BinaryMask last = layer_mask(arch, 1);
  EXPECT_EQ(last.popcount(), 8u);
  for (std::size_t i = 9; i < 17; ++i) EXPECT_TRUE(last[i]);
  const BinaryMask first = layer_mask(arch, 0);
  EXPECT_TRUE((first & last).none());
  EXPECT_TRUE((first | last).all());
  EXPECT_THROW(layer_mask(arch, 2), ConfigError);
}

TEST(Rle, EncodesRuns) {
  EXPECT_EQ(to_rle(BinaryMask::from_bits({1, 1, 0, 0, 0})), "5:1:2,3");
  EXPECT_EQ(to_rle(BinaryMask(0)), "0:0:");
  EXPECT_EQ(to_rle(BinaryMask(4)), "4:0:4");
}

TEST(Rle, RoundTripsRandomMasks) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const BinaryMask m = random_mask(rng() % 80, rng, 0.3);
    EXPECT_EQ(from_rle(to_rle(m)), m);
  }
}

TEST(Rle, RejectsMalformed) {
  for (const char* bad : {"", "5", "5:1", "5:2:5", "5:1:2,2", "5:1:2,4", "5:1:0,5", "5:1:2,", "x:1:5", "3:0:1,a"})
    EXPECT_THROW(from_rle(bad), InputError) << bad;
}

}  // namespace
}  // namespace fedselect
