#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "fedselect/model.hpp"
#include "fedselect/oracle.hpp"
#include "test_util.hpp"

namespace fedselect {
namespace {

using testing::random_batch;
using testing::random_params;

Architecture arch_2_3_2() { return Architecture::mlp(2, {3}, 2); }

TEST(Architecture, CountsParameters) {
  const Architecture arch = arch_2_3_2();
  EXPECT_EQ(arch.dimension(), 17u);
  EXPECT_EQ(arch.layout()[1].begin(), 9u);
  EXPECT_EQ(arch.layout()[1].end(), 17u);
}

TEST(Architecture, RejectsIncompatibleLayers) {
  EXPECT_THROW(Architecture({{2, 3, Activation::relu}, {4, 2, Activation::identity}}), ConfigError);
  EXPECT_THROW(Architecture({{2, 3, Activation::relu}}), ConfigError);
  EXPECT_THROW(Architecture(std::vector<LayerSpec>{}), ConfigError);
}

TEST(InitParams, DeterministicWithZeroBiasesAndBoundedWeights) {
  const Architecture arch = Architecture::mlp(16, {64, 64}, 10);
  const ParamVector a = init_params(arch, 7);
  EXPECT_EQ(a, init_params(arch, 7));
  EXPECT_NE(a, init_params(arch, 8));
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const auto& s = arch.layout()[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.layers()[l].input_dim));
    for (std::size_t i = s.weight_begin; i < s.weight_end; ++i) EXPECT_LE(std::abs(a[i]), bound);
    for (std::size_t i = s.bias_begin; i < s.bias_end; ++i) EXPECT_EQ(a[i], 0.0);
  }
}

TEST(Layout, FlattenUnflattenRoundTrips) {
  const Architecture arch = Architecture::mlp(3, {4, 5}, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ParamVector v = random_params(arch.dimension(), seed);
    EXPECT_EQ(flatten(arch, unflatten(arch, v)), v);
  }
}

TEST(ForwardLoss, ZeroParamsGiveLog2) {
  const Architecture arch = arch_2_3_2();
  Batch b{2, {1.0, -2.0, 0.5, 3.0}, {0, 1}};
  EXPECT_DOUBLE_EQ(forward_loss(arch, ParamVector(17), b), std::log(2.0));
}

TEST(ForwardLoss, ConfidentCorrectLogitsApproachZero) {
  const Architecture arch = Architecture::mlp(1, {}, 2);
  // logits = [0, 50 * x]
  ParamVector p(std::vector<double>{0.0, 50.0, 0.0, 0.0});
  Batch b{1, {1.0}, {1}};
  EXPECT_LT(forward_loss(arch, p, b), 1e-20);
  EXPECT_GE(forward_loss(arch, p, b), 0.0);
}

// Independent scalar re-implementation of the 2->3(relu)->2 network.
double scalar_loss_2_3_2(const ParamVector& p, double x0, double x1, int y) {
  double h[3];
  for (int o = 0; o < 3; ++o) {
    const double z = p[o * 2] * x0 + p[o * 2 + 1] * x1 + p[6 + o];
    h[o] = z > 0 ? z : 0;
  }
  double z[2];
  for (int c = 0; c < 2; ++c) z[c] = p[9 + c * 3] * h[0] + p[9 + c * 3 + 1] * h[1] + p[9 + c * 3 + 2] * h[2] + p[15 + c];
  const double lse = std::log(std::exp(z[0]) + std::exp(z[1]));
  return lse - z[y];
}

TEST(ForwardLoss, MatchesScalarReimplementation) {
  const Architecture arch = arch_2_3_2();
  const ParamVector p = random_params(17, 99, 1.0);
  Batch one{2, {0.3, -1.2}, {1}};
  EXPECT_NEAR(forward_loss(arch, p, one), scalar_loss_2_3_2(p, 0.3, -1.2, 1), 1e-14);
  Batch two{2, {0.3, -1.2, 2.0, 0.7}, {1, 0}};
  const double expected = (scalar_loss_2_3_2(p, 0.3, -1.2, 1) + scalar_loss_2_3_2(p, 2.0, 0.7, 0)) / 2.0;
  EXPECT_NEAR(forward_loss(arch, p, two), expected, 1e-14);
}

TEST(ForwardLoss, RejectsBadLabelsAndDims) {
  const Architecture arch = arch_2_3_2();
  EXPECT_THROW(forward_loss(arch, ParamVector(17), Batch{2, {1, 2}, {2}}), InputError);
  EXPECT_THROW(forward_loss(arch, ParamVector(17), Batch{2, {1, 2}, {-1}}), InputError);
  EXPECT_THROW(forward_loss(arch, ParamVector(17), Batch{3, {1, 2, 3}, {0}}), InputError);
  EXPECT_THROW(forward_loss(arch, ParamVector(17), Batch{2, {}, {}}), InputError);
}

TEST(ForwardLoss, InvariantUnderSampleReordering) {
  const Architecture arch = Architecture::mlp(4, {6}, 3);
  const ParamVector p = random_params(arch.dimension(), 5);
  const Batch b = random_batch(7, 4, 3, 11);
  Batch rev{4, {}, {}};
  for (std::size_t s = b.size(); s-- > 0;) {
    const auto r = b.row(s);
    rev.inputs.insert(rev.inputs.end(), r.begin(), r.end());
    rev.labels.push_back(b.labels[s]);
  }
  EXPECT_NEAR(forward_loss(arch, p, b), forward_loss(arch, p, rev), 1e-13);
}

TEST(Gradient, MatchesFiniteDifferencesOnRandomNetworks) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Architecture arch = Architecture::mlp(3, {4, 3}, 3);
    const ParamVector p = random_params(arch.dimension(), seed);
    const Batch b = random_batch(1 + seed % 4, 3, 3, seed + 1000);
    EXPECT_LE(max_relative_error(gradient(arch, p, b), finite_difference_gradient(arch, p, b, 1e-5)), 1e-6)
        << "seed " << seed;
  }
}

TEST(Gradient, DeadReluUnitsGetZeroGradient) {
  const Architecture arch = arch_2_3_2();
  ParamVector p = random_params(17, 4);
  // Hidden unit 1 always negative for positive inputs.
  p[2] = -1.0;
  p[3] = -1.0;
  p[7] = -0.5;
  const Batch b{2, {0.5, 1.0, 2.0, 0.1}, {0, 1}};
  const ParamVector g = gradient(arch, p, b);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[3], 0.0);
  EXPECT_EQ(g[7], 0.0);
  EXPECT_EQ(g[9 + 1], 0.0);  // output weights reading the dead unit
  EXPECT_EQ(g[12 + 1], 0.0);
}

TEST(Gradient, DuplicatedSampleEqualsSingle) {
  const Architecture arch = Architecture::mlp(3, {5}, 4);
  const ParamVector p = random_params(arch.dimension(), 21);
  const Batch one = random_batch(1, 3, 4, 8);
  Batch dup = one;
  dup.inputs.insert(dup.inputs.end(), one.inputs.begin(), one.inputs.end());
  dup.labels.push_back(one.labels[0]);
  EXPECT_EQ(gradient(arch, p, one), gradient(arch, p, dup));
}

TEST(MaskedSgdStep, AppliesOnlyToActivePositions) {
  const ParamVector out = masked_sgd_step(ParamVector({1.0, 2.0, 3.0}), ParamVector({1.0, 1.0, 1.0}),
                                          BinaryMask::from_bits({1, 0, 1}), 0.5);
  EXPECT_EQ(out, ParamVector({0.5, 2.0, 2.5}));
}

TEST(MaskedSgdStep, NoOpCases) {
  const ParamVector p = random_params(9, 1);
  const ParamVector g = random_params(9, 2);
  EXPECT_EQ(masked_sgd_step(p, g, BinaryMask(9), 0.3), p);
  EXPECT_EQ(masked_sgd_step(p, ParamVector(9), BinaryMask(9, true), 0.3), p);
  EXPECT_THROW(masked_sgd_step(p, ParamVector(8), BinaryMask(9), 0.3), InternalError);
}

TEST(MaskedSgdStep, ComplementIsBitIdentical) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamVector p = random_params(50, rng());
    const ParamVector g = random_params(50, rng());
    BinaryMask m(50);
    for (std::size_t i = 0; i < 50; ++i) m.set(i, rng() & 1);
    const ParamVector out = masked_sgd_step(p, g, m, 0.7);
    for (std::size_t i = 0; i < 50; ++i) {
      if (m[i]) continue;
      EXPECT_EQ(std::memcmp(&out.values[i], &p.values[i], sizeof(double)), 0);
    }
  }
}

TEST(Predict, TiesGoToLowestClass) {
  const Architecture arch = Architecture::mlp(2, {}, 3);
  EXPECT_EQ(predict(arch, ParamVector(arch.dimension()), std::vector<double>{1.0, 2.0}), 0);
}

}  // namespace
}  // namespace fedselect
