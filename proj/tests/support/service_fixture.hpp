#pragma once

// A small service over the toy corpus: one event of five replicated-cluster
// claims, three enrolled participants and a manual clock.

#include <gtest/gtest.h>

#include "replimarket/service.hpp"
#include "support/fixtures.hpp"

namespace replimarket::fx {

inline TrainedMarket service_population() {
  const ClaimSet corpus = toy_corpus();
  TrainedMarket tm;
  tm.config = toy_config();
  tm.config.initial_agent_cash = 500.0;
  tm.config.lambda = 0.2;
  tm.config.liquidity = 20.0;
  tm.population = spawn_population(corpus, 1, tm.config.genome, tm.config.seed);
  tm.scaler = corpus.scaler;
  return tm;
}

inline ServiceConfig service_config(MarketMode mode = MarketMode::hybrid) {
  ServiceConfig c;
  c.mode = mode;
  c.manual_clock = true;
  c.fsync_journal = false;
  c.sim.ticks = 43'200;
  c.sim.seed = 21;
  c.admin_token = "admin-secret";
  c.participants = {{"tok-a", {"alice", "ev1"}},
                    {"tok-b", {"bob", "ev1"}},
                    {"tok-c", {"carol", "ev1"}},
                    {"tok-z", {"zed", "ev2"}}};
  return c;
}

inline const std::vector<std::string>& event_claims() {
  static const std::vector<std::string> ids{"r0", "r1", "r2", "r3", "n12"};
  return ids;
}

inline std::unique_ptr<TradingService> make_service(
    MarketMode mode = MarketMode::hybrid,
    std::optional<std::filesystem::path> journal = std::nullopt) {
  return std::make_unique<TradingService>(service_config(mode), toy_corpus(), service_population(),
                                          journal);
}

inline void expect_same_state(const MarketState& a, const MarketState& b) {
  EXPECT_EQ(a.q_yes(), b.q_yes());
  EXPECT_EQ(a.q_no(), b.q_no());
  EXPECT_EQ(a.tick(), b.tick());
  EXPECT_EQ(a.collected(), b.collected());
  EXPECT_EQ(a.paid_out(), b.paid_out());
  EXPECT_EQ(a.closed(), b.closed());
  EXPECT_EQ(a.log(), b.log());
}

inline void expect_same_market(const TradingService::MarketDump& a,
                               const TradingService::MarketDump& b) {
  expect_same_state(a.state, b.state);
  EXPECT_EQ(a.agents, b.agents);
  EXPECT_EQ(a.humans, b.humans);
}

}  // namespace replimarket::fx
