#pragma once

// One market's discrete-time loop. Every tick first lets the agents decide
// in ascending id order (each executed buy moves the price before the next
// agent looks at it), then drains the queued human orders first-in,
// first-out. Training markets, batch simulations and the live service all
// run through this class.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "replimarket/agents.hpp"
#include "replimarket/lmsr.hpp"

namespace replimarket {

struct AgentRules {
  double lambda = 1.0;              // per-agent per-tick participation probability
  double margin = 0.0;              // minimum relative undervaluation to buy
  double initial_agent_cash = 500.0;
};

struct RejectionRecord {
  Order order;
  Rejection reason = Rejection::insufficient_cash;
  std::int64_t tick = 0;

  friend bool operator==(const RejectionRecord&, const RejectionRecord&) = default;
};

struct TickReport {
  std::int64_t tick = 0;
  std::size_t first_trade = 0;      // index into the state log
  std::size_t agent_trades = 0;
  std::size_t human_trades = 0;
  std::vector<RejectionRecord> rejections;
  // One entry per human order, in batch order: empty when it executed.
  std::vector<std::optional<Rejection>> human_results;
};

struct MarketParticipation {
  std::size_t eligible_agents = 0;
  std::size_t agents_traded = 0;
  double active_fraction_sum = 0.0;  // sum over ticks of (agents trading / eligible)
  std::int64_t ticks = 0;

  double traded_fraction() const noexcept {
    return eligible_agents ? static_cast<double>(agents_traded) / eligible_agents : 0.0;
  }
  double mean_active_fraction() const noexcept {
    return ticks ? active_fraction_sum / static_cast<double>(ticks) : 0.0;
  }
};

inline std::string agent_owner_id(std::uint32_t id) { return "agent-" + std::to_string(id); }

class MarketEngine {
 public:
  /// `agents` may be empty (human-only markets). Agents spawned from
  /// `exclude_origin` sit out, which gives leave-one-out evaluation.
  MarketEngine(std::span<const Agent> agents, const FeatureVector& claim, const AgentRules& rules,
               double liquidity, std::uint64_t seed, double human_stake = 25.0,
               std::optional<std::string> exclude_origin = std::nullopt)
      : agents_(agents.begin(), agents.end()),
        rules_(rules),
        state_(liquidity),
        rng_(seed),
        human_stake_(human_stake) {
    if (rules.lambda < 0.0 || rules.lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    if (!(rules.margin >= 0.0)) throw ConfigError("percent difference must be >= 0");
    distance_.reserve(agents_.size());
    active_.reserve(agents_.size());
    accounts_.reserve(agents_.size());
    for (const Agent& a : agents_) {
      distance_.push_back(distance(a.genome.center, claim));
      const bool active = !(exclude_origin && a.origin == *exclude_origin);
      active_.push_back(active);
      if (active) ++participation_.eligible_agents;
      accounts_.push_back(Account{agent_owner_id(a.id), rules.initial_agent_cash, 0, 0, 0});
    }
    traded_.assign(agents_.size(), false);
  }

  const MarketState& state() const noexcept { return state_; }
  MarketState& state() noexcept { return state_; }
  double price_yes() const noexcept { return spot_price(state_, Side::yes); }
  const std::vector<Agent>& agents() const noexcept { return agents_; }
  const std::vector<Account>& agent_accounts() const noexcept { return accounts_; }
  std::vector<Account>& agent_accounts() noexcept { return accounts_; }
  const std::map<std::string, Account>& human_accounts() const noexcept { return humans_; }
  std::map<std::string, Account>& human_accounts() noexcept { return humans_; }
  const std::vector<RejectionRecord>& rejections() const noexcept { return rejections_; }
  const MarketParticipation& participation() const noexcept { return participation_; }
  double human_stake() const noexcept { return human_stake_; }

  const Account& human_account(const std::string& owner) {
    return humans_.try_emplace(owner, Account{owner, human_stake_, 0, 0, 0}).first->second;
  }

  /// Advances one tick. Rejected human orders are recorded, never thrown.
  TickReport tick(std::span<const Order> human_orders = {}) {
    if (state_.closed()) throw StateError("market is closed");
    TickReport rep;
    rep.tick = state_.tick();
    rep.first_trade = state_.log().size();

    double p_yes = spot_price(state_, Side::yes);
    double p_no = spot_price(state_, Side::no);
    std::size_t active_this_tick = 0;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      if (!active_[i]) continue;
      const AgentGenome& g = agents_[i].genome;
      const double p_side = g.side == Side::yes ? p_yes : p_no;
      if (!wants_to_buy(g, distance_[i], p_side, rules_.margin)) continue;
      if (!participates(rules_.lambda, rng_)) continue;
      Account& acct = accounts_[i];
      if (acct.cash < trade_cost(state_, g.side, Action::buy)) continue;  // abstain
      const Trade t = execute(state_, acct, Order{acct.owner_id, g.side, Action::buy, rep.tick});
      p_yes = t.spot_price_after;
      p_no = spot_price(state_, Side::no);
      ++rep.agent_trades;
      ++active_this_tick;
      if (!traded_[i]) {
        traded_[i] = true;
        ++participation_.agents_traded;
      }
    }

    for (const Order& o : human_orders) {
      Account& acct =
          humans_.try_emplace(o.owner_id, Account{o.owner_id, human_stake_, 0, 0, 0}).first->second;
      try {
        execute(state_, acct, o);
        ++rep.human_trades;
        rep.human_results.emplace_back();
      } catch (const OrderRejected& e) {
        rep.rejections.push_back({o, e.reason(), rep.tick});
        rep.human_results.emplace_back(e.reason());
      }
    }
    rejections_.insert(rejections_.end(), rep.rejections.begin(), rep.rejections.end());

    if (participation_.eligible_agents)
      participation_.active_fraction_sum +=
          static_cast<double>(active_this_tick) / participation_.eligible_agents;
    ++participation_.ticks;
    state_.advance_tick();
    return rep;
  }

  void run(std::int64_t ticks) {
    for (std::int64_t t = 0; t < ticks; ++t) tick();
  }

  /// Settles every agent and human account; returns the total paid out.
  double settle_all(Outcome outcome) {
    std::vector<Account> all = accounts_;
    for (const auto& [id, acct] : humans_) all.push_back(acct);
    double total = 0.0;
    for (double p : settle(state_, std::span<Account>(all), outcome)) total += p;
    std::copy_n(all.begin(), accounts_.size(), accounts_.begin());
    std::size_t k = accounts_.size();
    for (auto& [id, acct] : humans_) acct = all[k++];
    return total;
  }

 private:
  std::vector<Agent> agents_;
  AgentRules rules_;
  MarketState state_;
  Rng rng_;
  double human_stake_;
  std::vector<double> distance_;
  std::vector<bool> active_;
  std::vector<bool> traded_;
  std::vector<Account> accounts_;
  std::map<std::string, Account> humans_;
  std::vector<RejectionRecord> rejections_;
  MarketParticipation participation_;
};

}  // namespace replimarket
