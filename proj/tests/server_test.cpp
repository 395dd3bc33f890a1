#include <gtest/gtest.h>

#include "fedselect/federation.hpp"
#include "fedselect/server.hpp"
#include "test_util.hpp"

namespace fedselect {
namespace {

using testing::tiny_config;

ClientUpload upload(std::vector<double> values, std::initializer_list<int> bits) {
  return make_upload(ParamVector{std::move(values)}, BinaryMask::from_bits(bits));
}

TEST(Upload, ZeroesPersonalizedPositions) {
  const ClientUpload up = upload({1, 2, 3, 4}, {0, 1, 0, 1});
  EXPECT_EQ(up.values.values, (std::vector<double>{1, 0, 3, 0}));
}

TEST(Aggregate, ThreeClientsWithOverlappingMasks) {
  // Every client personalizes position 0; positions 1..3 are each
  // personalized by exactly one client.
  const std::vector<ClientUpload> ups{
      upload({9, 1, 2, 99}, {1, 0, 0, 1}),
      upload({9, 99, 4, 6}, {1, 1, 0, 0}),
      upload({9, 3, 99, 8}, {1, 0, 1, 0}),
  };
  const AggregationScratch s = aggregate(ups);
  EXPECT_EQ(s.omega, (std::vector<std::size_t>{0, 2, 2, 2}));
  EXPECT_EQ(s.m_g, BinaryMask::from_bits({0, 1, 1, 1}));
  EXPECT_EQ(s.theta_g.values, (std::vector<double>{0, 2, 3, 7}));
}

TEST(Aggregate, AllGlobalIsPlainMean) {
  const std::vector<ClientUpload> ups{upload({1, 2}, {0, 0}), upload({3, 6}, {0, 0}), upload({5, 1}, {0, 0})};
  const AggregationScratch s = aggregate(ups);
  EXPECT_EQ(s.theta_g.values, (std::vector<double>{3, 3}));
  EXPECT_EQ(s.omega, (std::vector<std::size_t>{3, 3}));
}

TEST(Aggregate, SingleClientEchoesItsGlobalBlock) {
  const std::vector<ClientUpload> ups{upload({1.5, -2, 7}, {0, 1, 0})};
  const AggregationScratch s = aggregate(ups);
  EXPECT_EQ(s.theta_g.values, (std::vector<double>{1.5, 0, 7}));
  EXPECT_EQ(s.m_g, BinaryMask::from_bits({1, 0, 1}));
}

TEST(Aggregate, RejectsEmptyAndMismatched) {
  EXPECT_THROW(aggregate({}), InternalError);
  const std::vector<ClientUpload> ups{upload({1, 2}, {0, 0}), upload({1}, {0})};
  EXPECT_THROW(aggregate(ups), InternalError);
}

TEST(Distribute, MixesGlobalAndPersonalValues) {
  AggregationScratch s{ParamVector{{10, 20, 30, 0}}, {1, 2, 1, 0}, BinaryMask::from_bits({1, 1, 1, 0})};
  const ClientState c{5, ParamVector(4), BinaryMask::from_bits({0, 1, 0, 0}), nullptr};
  const ParamVector trained{{1, 2, 3, 4}};
  const BinaryMask m_new = BinaryMask::from_bits({0, 1, 1, 0});
  const ClientState out = distribute(s, c, trained, c.mask, m_new);
  // 0: global -> 10; 1: personal -> 2; 2: global under the old mask -> 30;
  // 3: no contributor -> local value.
  EXPECT_EQ(out.theta.values, (std::vector<double>{10, 2, 30, 4}));
  EXPECT_EQ(out.mask, m_new);
  EXPECT_EQ(out.id, 5u);
  EXPECT_THROW(distribute(s, c, trained, c.mask, BinaryMask(4)), InternalError);
}

struct RoundFixture : ::testing::Test {
  FLConfig cfg = tiny_config();
  Federation fed = setup_federation(cfg);
};

TEST_F(RoundFixture, AggregateMatchesIndependentReconstruction) {
  const RoundResult r = run_round(fed.arch, fed.clients, cfg, 0);
  const LocalConfig lc = cfg.local_config();
  const std::size_t d = fed.arch.dimension();
  std::vector<ParamVector> trained;
  for (const auto& c : fed.clients)
    trained.push_back(grad_select(fed.arch, c.theta, c.mask, local_epochs_for(c, cfg, 0, lc.local_epochs), lc).theta);
  for (std::size_t i = 0; i < d; ++i) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < trained.size(); ++k) {
      if (fed.clients[k].mask[i]) continue;
      sum += trained[k][i];
      ++n;
    }
    ASSERT_EQ(r.scratch.omega[i], n);
    if (n > 0) {
      EXPECT_DOUBLE_EQ(r.scratch.theta_g[i], sum / static_cast<double>(n)) << i;
    }
  }
  for (std::size_t k = 0; k < trained.size(); ++k)
    for (std::size_t i = 0; i < d; ++i) {
      const bool from_server = !fed.clients[k].mask[i] && r.scratch.omega[i] > 0;
      EXPECT_EQ(r.clients[k].theta[i], from_server ? r.scratch.theta_g[i] : trained[k][i]);
    }
}

TEST_F(RoundFixture, MasksGrowAndUploadsShrink) {
  std::vector<ClientState> clients = fed.clients;
  std::vector<std::size_t> last(cfg.n_clients, fed.arch.dimension() + 1);
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    RoundResult r = run_round(fed.arch, clients, cfg, t);
    for (std::size_t k = 0; k < clients.size(); ++k) {
      EXPECT_TRUE(is_subset(clients[k].mask, r.clients[k].mask));
      EXPECT_EQ(r.report.per_client_upload[k], fed.arch.dimension() - clients[k].mask.popcount());
      EXPECT_LE(r.report.per_client_upload[k], last[k]);
      last[k] = r.report.per_client_upload[k];
      EXPECT_DOUBLE_EQ(r.report.per_client_sparsity[k], personalized_fraction(r.clients[k].mask));
    }
    clients = std::move(r.clients);
  }
}

TEST_F(RoundFixture, ParallelRoundIsBitIdentical) {
  FLConfig par = cfg;
  par.threads = 3;
  const RoundResult a = run_round(fed.arch, fed.clients, cfg, 0);
  const RoundResult b = run_round(fed.arch, fed.clients, par, 0);
  EXPECT_EQ(a.report, b.report);
  for (std::size_t k = 0; k < a.clients.size(); ++k) {
    EXPECT_EQ(a.clients[k].theta, b.clients[k].theta);
    EXPECT_EQ(a.clients[k].mask, b.clients[k].mask);
  }
}

TEST_F(RoundFixture, RoundBeyondHorizonIsRejected) {
  EXPECT_THROW(run_round(fed.arch, fed.clients, cfg, cfg.rounds), InternalError);
}

TEST_F(RoundFixture, ReportAccuracyMatchesEvaluation) {
  const RoundResult r = run_round(fed.arch, fed.clients, cfg, 0);
  for (std::size_t k = 0; k < r.clients.size(); ++k) {
    const Dataset& test = r.clients[k].data->test;
    std::size_t hits = 0;
    for (std::size_t s = 0; s < test.size(); ++s)
      hits += predict(fed.arch, r.clients[k].theta, test.row(s)) == test.labels[s] ? 1 : 0;
    EXPECT_DOUBLE_EQ(r.report.per_client_accuracy[k], static_cast<double>(hits) / static_cast<double>(test.size()));
  }
}

}  // namespace
}  // namespace fedselect
