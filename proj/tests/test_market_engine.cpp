#include <gtest/gtest.h>

#include <cmath>

#include "replimarket/market_engine.hpp"
#include "support/fixtures.hpp"

using namespace replimarket;

namespace {

std::vector<Agent> agents_at(const FeatureVector& x, std::size_t n, Side side) {
  std::vector<Agent> out;
  for (std::size_t i = 0; i < n; ++i) {
    Agent a;
    a.id = static_cast<std::uint32_t>(i);
    a.origin = "o" + std::to_string(i);
    a.genome.center = x;
    a.genome.side = side;
    a.genome.base_radius = 1.0;
    a.genome.reservation_price = 0.9;
    a.genome.price_sensitivity = 0.0;
    out.push_back(a);
  }
  return out;
}

}  // namespace

TEST(MarketEngine, IdleTickOnlyAdvancesCounter) {
  FeatureVector x{};
  const auto agents = agents_at(x, 5, Side::yes);
  MarketEngine m(agents, x, AgentRules{0.0, 0.0, 500.0}, 10.0, 1);
  const TickReport r = m.tick();
  EXPECT_EQ(r.tick, 0);
  EXPECT_EQ(m.state().tick(), 1);
  EXPECT_TRUE(m.state().log().empty());
  EXPECT_DOUBLE_EQ(m.price_yes(), 0.5);
}

TEST(MarketEngine, AgentsTradeInIdOrderThenHumansFifo) {
  FeatureVector x{};
  auto agents = agents_at(x, 3, Side::yes);
  MarketEngine m(agents, x, AgentRules{1.0, 0.0, 500.0}, 10.0, 1);
  const std::vector<Order> humans{{"alice", Side::no, Action::buy, 0},
                                  {"bob", Side::no, Action::buy, 0},
                                  {"alice", Side::yes, Action::sell, 0}};
  const TickReport r = m.tick(humans);
  const auto& log = m.state().log();
  ASSERT_EQ(r.agent_trades, 3u);
  ASSERT_EQ(r.human_trades, 2u);
  EXPECT_EQ(log[0].order.owner_id, "agent-0");
  EXPECT_EQ(log[1].order.owner_id, "agent-1");
  EXPECT_EQ(log[2].order.owner_id, "agent-2");
  EXPECT_EQ(log[3].order.owner_id, "alice");
  EXPECT_EQ(log[4].order.owner_id, "bob");
  // Each agent buy sees the price left by the previous one.
  EXPECT_LT(log[0].spot_price_after, log[1].spot_price_after);
  EXPECT_LT(log[0].cost(), log[1].cost());
  // alice holds no yes shares: logged, not thrown.
  ASSERT_EQ(r.rejections.size(), 1u);
  EXPECT_EQ(r.rejections[0].reason, Rejection::insufficient_holdings);
  ASSERT_EQ(r.human_results.size(), 3u);
  EXPECT_FALSE(r.human_results[0]);
  EXPECT_EQ(r.human_results[2], Rejection::insufficient_holdings);
}

TEST(MarketEngine, HumanAccountsStartAtStake) {
  FeatureVector x{};
  MarketEngine m({}, x, AgentRules{}, 100.0, 1, 25.0);
  EXPECT_DOUBLE_EQ(m.human_account("h").cash, 25.0);
  const std::vector<Order> buy{{"h", Side::yes, Action::buy, 0}};
  m.tick(buy);
  EXPECT_NEAR(m.human_accounts().at("h").cash, 24.49875000520829861137, 1e-13);
  EXPECT_GT(m.price_yes(), 0.5);
}

TEST(MarketEngine, AgentsAbstainWhenBroke) {
  FeatureVector x{};
  const auto agents = agents_at(x, 1, Side::yes);
  MarketEngine m(agents, x, AgentRules{1.0, 0.0, 0.2}, 10.0, 1);
  m.run(10);
  EXPECT_TRUE(m.state().log().empty());
}

TEST(MarketEngine, OneSidedDemandRaisesPrice) {
  FeatureVector x{};
  const auto agents = agents_at(x, 10, Side::yes);
  MarketEngine m(agents, x, AgentRules{0.5, 0.0, 500.0}, 10.0, 3);
  m.run(60);
  // Buying stops on the first trade that lifts the price past the reservation.
  EXPECT_GT(m.price_yes(), 0.9);
  EXPECT_LT(m.price_yes(), 0.91);
}

TEST(MarketEngine, ExcludedOriginSitsOut) {
  FeatureVector x{};
  const auto agents = agents_at(x, 4, Side::yes);
  MarketEngine m(agents, x, AgentRules{1.0, 0.0, 500.0}, 10.0, 1, 25.0, std::string("o2"));
  m.tick();
  EXPECT_EQ(m.participation().eligible_agents, 3u);
  for (const Trade& t : m.state().log()) EXPECT_NE(t.order.owner_id, "agent-2");
}

TEST(MarketEngine, DeterministicForSeed) {
  const ClaimSet corpus = fx::toy_corpus();
  const Population pop = spawn_population(corpus, 2, GenomeDefaults{}, 1);
  auto run = [&](std::uint64_t seed) {
    MarketEngine m(pop.agents, corpus.records[0].features, AgentRules{0.3, 0.0, 500.0}, 10.0, seed);
    m.run(200);
    return m.state().log();
  };
  EXPECT_EQ(run(17), run(17));
  EXPECT_NE(run(17), run(18));
}

TEST(MarketEngine, CashIsConservedThroughSettlement) {
  const ClaimSet corpus = fx::toy_corpus();
  const Population pop = spawn_population(corpus, 1, GenomeDefaults{}, 1);
  MarketEngine m(pop.agents, corpus.records[0].features, AgentRules{0.5, 0.0, 500.0}, 10.0, 9, 25.0);
  std::vector<Order> humans{{"h1", Side::no, Action::buy, 0}, {"h2", Side::yes, Action::buy, 0}};
  for (int t = 0; t < 50; ++t) m.tick(humans);
  auto total_cash = [&] {
    double s = 0.0;
    for (const auto& a : m.agent_accounts()) s += a.cash;
    for (const auto& [id, a] : m.human_accounts()) s += a.cash;
    return s;
  };
  const double initial = 500.0 * pop.size() + 25.0 * 2;
  EXPECT_NEAR(total_cash() - initial + m.state().collected(), 0.0, 1e-9);
  const double paid = m.settle_all(Outcome::not_replicated);
  EXPECT_NEAR(paid, m.state().q_no(), 1e-12);
  EXPECT_NEAR(total_cash() - initial + m.state().collected() - m.state().paid_out(), 0.0, 1e-9);
  EXPECT_THROW(m.tick(), StateError);
}

TEST(MarketEngine, RejectsBadRules) {
  FeatureVector x{};
  EXPECT_THROW(MarketEngine({}, x, AgentRules{1.5, 0.0, 1.0}, 10.0, 1), ConfigError);
  EXPECT_THROW(MarketEngine({}, x, AgentRules{0.5, -0.1, 1.0}, 10.0, 1), ConfigError);
  EXPECT_THROW(MarketEngine({}, x, AgentRules{0.5, 0.0, 1.0}, 0.0, 1), ConfigError);
}
