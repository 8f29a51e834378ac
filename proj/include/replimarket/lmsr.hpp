#pragma once

// Binary-option market maker using the logarithmic market scoring rule.
//
// Cost potential  C(q) = b * ln(exp(q_yes / b) + exp(q_no / b))
// Spot price      p_yes = softmax(q / b)[yes]
//
// Orders are single-share and execute directly against the maker at the
// cost-potential difference; there is no order book.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "replimarket/core.hpp"
#include "json.hpp"

namespace replimarket {

struct Order {
  std::string owner_id;
  Side side = Side::yes;
  Action action = Action::buy;
  std::int64_t tick_submitted = 0;

  friend bool operator==(const Order&, const Order&) = default;
};

struct Trade {
  Order order;
  double cash_delta = 0.0;        // negative for buys
  double spot_price_after = 0.5;  // yes-contract price after the trade
  std::int64_t tick_executed = 0;
  std::int64_t wall_ms = 0;       // 0 in batch runs

  double cost() const noexcept { return -cash_delta; }

  // Wall-clock time is metadata and is excluded from equality.
  friend bool operator==(const Trade& a, const Trade& b) {
    return a.order == b.order && a.cash_delta == b.cash_delta &&
           a.spot_price_after == b.spot_price_after && a.tick_executed == b.tick_executed;
  }
};

struct Account {
  std::string owner_id;
  double cash = 0.0;
  std::int64_t holdings_yes = 0;
  std::int64_t holdings_no = 0;
  std::int64_t trade_count = 0;

  std::int64_t& holdings(Side s) noexcept { return s == Side::yes ? holdings_yes : holdings_no; }
  std::int64_t holdings(Side s) const noexcept {
    return s == Side::yes ? holdings_yes : holdings_no;
  }

  friend bool operator==(const Account&, const Account&) = default;
};

enum class Rejection : std::uint8_t { insufficient_cash, insufficient_holdings, market_closed };

inline constexpr std::string_view to_string(Rejection r) noexcept {
  switch (r) {
    case Rejection::insufficient_cash: return "insufficient_cash";
    case Rejection::insufficient_holdings: return "insufficient_holdings";
    case Rejection::market_closed: return "market_closed";
  }
  return "unknown";
}

class OrderRejected : public Error {
 public:
  explicit OrderRejected(Rejection r)
      : Error(std::string("order rejected: ") + std::string(to_string(r))), reason_(r) {}
  Rejection reason() const noexcept { return reason_; }

 private:
  Rejection reason_;
};

class MarketState {
 public:
  explicit MarketState(double liquidity = 100.0) : liquidity_(liquidity) {
    if (!(liquidity > 0.0) || !std::isfinite(liquidity))
      throw ConfigError("liquidity must be a positive finite number");
  }

  double liquidity() const noexcept { return liquidity_; }
  double q_yes() const noexcept { return q_yes_; }
  double q_no() const noexcept { return q_no_; }
  double quantity(Side s) const noexcept { return s == Side::yes ? q_yes_ : q_no_; }
  std::int64_t tick() const noexcept { return tick_; }
  const std::vector<Trade>& log() const noexcept { return log_; }
  bool closed() const noexcept { return closed_; }
  bool settled() const noexcept { return settled_; }

  /// Net cash the maker has taken in from trading (buys minus sell refunds).
  double collected() const noexcept { return collected_; }
  double paid_out() const noexcept { return paid_out_; }

  void advance_tick() noexcept { ++tick_; }
  void close() noexcept { closed_ = true; }

  // Mutators are reserved for the engine functions below.
  friend Trade execute(MarketState&, Account&, const Order&);
  friend std::vector<double> settle(MarketState&, std::span<Account>, Outcome);
  friend MarketState with_quantities(double, double, double);

 private:
  double liquidity_;
  double q_yes_ = 0.0;
  double q_no_ = 0.0;
  std::int64_t tick_ = 0;
  std::vector<Trade> log_;
  double collected_ = 0.0;
  double paid_out_ = 0.0;
  bool closed_ = false;
  bool settled_ = false;
};

/// A state at arbitrary outstanding quantities with an empty log.
inline MarketState with_quantities(double liquidity, double q_yes, double q_no) {
  MarketState s(liquidity);
  s.q_yes_ = q_yes;
  s.q_no_ = q_no;
  return s;
}

// Representable bounds of a spot price. Beyond |logit| ~ 37 the exact
// price rounds to 0 or 1 in double; clamping keeps it inside (0,1).
inline constexpr double kPriceFloor = std::numeric_limits<double>::min();
inline constexpr double kPriceCeil = 1.0 - std::numeric_limits<double>::epsilon() / 2;

inline double logistic(double x) noexcept {
  // Never overflows: the exponent is always <= 0.
  double p;
  if (x >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    p = e / (1.0 + e);
  }
  return std::clamp(p, kPriceFloor, kPriceCeil);
}

inline double price_yes(double q_yes, double q_no, double b) noexcept {
  return logistic((q_yes - q_no) / b);
}

inline double spot_price(const MarketState& s, Side side) noexcept {
  const double d = (s.q_yes() - s.q_no()) / s.liquidity();
  return logistic(side == Side::yes ? d : -d);
}

/// C(q) evaluated with the max exponent factored out.
inline double cost_potential(double q_yes, double q_no, double b) noexcept {
  const double m = std::max(q_yes, q_no);
  return m + b * std::log(std::exp((q_yes - m) / b) + std::exp((q_no - m) / b));
}

inline double cost_potential(const MarketState& s) noexcept {
  return cost_potential(s.q_yes(), s.q_no(), s.liquidity());
}

/// C(q') - C(q) for one share added (buy) or removed (sell) on `side`.
/// Equivalent to b * ln(1 + p_side * (exp(+-1/b) - 1)), which keeps full
/// precision at large outstanding quantities.
inline double trade_cost(const MarketState& s, Side side, Action action) noexcept {
  const double b = s.liquidity();
  const double p = spot_price(s, side);
  const double step = action == Action::buy ? 1.0 / b : -1.0 / b;
  return b * std::log1p(p * std::expm1(step));
}

/// Executes one single-share order. On rejection nothing is modified.
inline Trade execute(MarketState& s, Account& account, const Order& order) {
  if (s.closed_) throw OrderRejected(Rejection::market_closed);
  const double cost = trade_cost(s, order.side, order.action);
  if (order.action == Action::buy) {
    if (account.cash < cost) throw OrderRejected(Rejection::insufficient_cash);
  } else if (account.holdings(order.side) < 1) {
    throw OrderRejected(Rejection::insufficient_holdings);
  }

  const double dq = order.action == Action::buy ? 1.0 : -1.0;
  (order.side == Side::yes ? s.q_yes_ : s.q_no_) += dq;
  account.holdings(order.side) += static_cast<std::int64_t>(dq);
  account.cash -= cost;
  ++account.trade_count;
  s.collected_ += cost;

  Trade t{order, -cost, price_yes(s.q_yes_, s.q_no_, s.liquidity_), s.tick_, 0};
  s.log_.push_back(t);
  return t;
}

/// Pays $1 per winning-side share and zeroes all holdings. Closes the
/// market if still open. A second settlement is an error.
inline std::vector<double> settle(MarketState& s, std::span<Account> accounts, Outcome outcome) {
  if (s.settled_) throw StateError("market already settled");
  s.closed_ = true;
  s.settled_ = true;
  const Side winner = side_for(outcome);
  std::vector<double> payouts;
  payouts.reserve(accounts.size());
  for (Account& a : accounts) {
    const double pay = static_cast<double>(a.holdings(winner));
    a.cash += pay;
    a.holdings_yes = 0;
    a.holdings_no = 0;
    s.paid_out_ += pay;
    payouts.push_back(pay);
  }
  return payouts;
}

inline std::int64_t wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

inline nlohmann::json to_json(const Trade& t) {
  return {{"owner", t.order.owner_id},
          {"side", std::string(to_string(t.order.side))},
          {"action", std::string(to_string(t.order.action))},
          {"cost", t.cost()},
          {"price", t.spot_price_after},
          {"tick", t.tick_executed},
          {"submitted", t.order.tick_submitted},
          {"ts", t.wall_ms}};
}

inline Trade trade_from_json(const nlohmann::json& j) {
  Trade t;
  t.order.owner_id = j.at("owner").get<std::string>();
  const auto side = parse_side(j.at("side").get<std::string>());
  const auto action = parse_action(j.at("action").get<std::string>());
  if (!side || !action) throw DataError("trade record: bad side/action");
  t.order.side = *side;
  t.order.action = *action;
  t.order.tick_submitted = j.value("submitted", j.at("tick").get<std::int64_t>());
  t.cash_delta = -j.at("cost").get<double>();
  t.spot_price_after = j.at("price").get<double>();
  t.tick_executed = j.at("tick").get<std::int64_t>();
  t.wall_ms = j.value("ts", std::int64_t{0});
  return t;
}

/// Append-only JSON-lines trade log.
inline void write_trade_log(std::ostream& out, std::span<const Trade> trades) {
  for (const Trade& t : trades) out << to_json(t).dump() << '\n';
}

}  // namespace replimarket
