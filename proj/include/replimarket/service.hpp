#pragma once

// Live experiment server core: events of five markets, participant
// sessions, per-market single-consumer order queues, a sealed money
// market, payouts, and journal-based recovery. The HTTP binding lives in
// http_api.hpp; everything here is usable (and tested) without sockets.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "replimarket/evolution.hpp"
#include "replimarket/feature_store.hpp"
#include "replimarket/journal.hpp"
#include "replimarket/market_engine.hpp"
#include "replimarket/market_sim.hpp"
#include "json.hpp"

namespace replimarket {

enum class ServiceErrc : std::uint8_t { bad_request, unauthorized, not_found, conflict, sealed };

class ServiceError : public Error {
 public:
  ServiceError(ServiceErrc code, const std::string& what) : Error(what), code_(code) {}
  ServiceErrc code() const noexcept { return code_; }

 private:
  ServiceErrc code_;
};

enum class EventStatus : std::uint8_t { scheduled, open, closed, settled };

inline constexpr std::string_view to_string(EventStatus s) noexcept {
  switch (s) {
    case EventStatus::scheduled: return "scheduled";
    case EventStatus::open: return "open";
    case EventStatus::closed: return "closed";
    case EventStatus::settled: return "settled";
  }
  return "unknown";
}

struct ParticipantInfo {
  std::string participant_id;
  std::string event_id;
};

struct ServiceConfig {
  SimConfig sim;                 // tick budget, tick interval, stake
  MarketMode mode = MarketMode::hybrid;
  std::size_t min_trades = 3;    // counted across the event's markets
  double flat_compensation = 40.0;
  bool settle_money_market = true;
  bool manual_clock = false;     // ticks advance only through advance()
  bool fsync_journal = true;
  std::int64_t checkpoint_every = 1;  // quiet ticks between durable tick markers
  std::size_t recent_trades = 20;
  std::string admin_token;
  std::map<std::string, ParticipantInfo> participants;  // token -> participant
};

inline constexpr std::size_t kMarketsPerEvent = 5;

struct OrderAck {
  std::string market_id;
  std::uint64_t seq = 0;
  std::size_t queue_position = 0;
  std::int64_t tick = 0;  // tick at which it will execute
};

enum class OrderState : std::uint8_t { queued, executed, rejected };

struct OrderResult {
  OrderState state = OrderState::queued;
  std::optional<Trade> trade;
  std::optional<Rejection> reason;
};

struct MarketSnapshot {
  std::string market_id;
  std::string claim_id;
  std::string title;
  std::int64_t tick = 0;  // completed ticks
  double price_yes = 0.5;
  bool open = false;
  std::vector<std::pair<std::int64_t, double>> price_history;
  std::vector<Trade> recent_trades;
  std::map<std::string, Account> humans;
};

struct PayoutRecord {
  std::string participant_id;
  bool eligible = false;
  std::int64_t trades = 0;
  double money_market_cash = 0.0;  // final cash in the money market account
  double payout = 0.0;             // money_market_cash if eligible, else 0
  double flat_compensation = 0.0;
};

struct StreamMessage {
  std::uint64_t id = 0;
  nlohmann::json body;
};

/// Per-event server-push buffer. Readers poll from an id with a timeout.
class EventStream {
 public:
  void publish(nlohmann::json body) {
    {
      std::lock_guard lock(mu_);
      messages_.push_back({messages_.size() + 1, std::move(body)});
    }
    cv_.notify_all();
  }

  std::vector<StreamMessage> wait_after(std::uint64_t last_id, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return messages_.size() > last_id || closed_; });
    return {messages_.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(last_id, messages_.size())),
            messages_.end()};
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<StreamMessage> messages_;
  bool closed_ = false;
};

/// One market of an event: an engine, its FIFO ingress queue, and the last
/// published snapshot. Only the tick loop (or advance()) mutates the engine.
class LiveMarket {
 public:
  LiveMarket(std::string event_id, std::string market_id, const ClaimRecord& claim,
             MarketEngine engine, Journal* journal, EventStream* stream,
             const ServiceConfig& cfg)
      : event_id_(std::move(event_id)),
        market_id_(std::move(market_id)),
        claim_(claim),
        engine_(std::move(engine)),
        journal_(journal),
        stream_(stream),
        cfg_(cfg) {
    publish_snapshot();
  }

  const std::string& id() const noexcept { return market_id_; }
  const ClaimRecord& claim() const noexcept { return claim_; }

  OrderAck enqueue(const std::string& participant, Side side, Action action) {
    std::lock_guard lock(queue_mu_);
    if (!accepting_) throw ServiceError(ServiceErrc::conflict, "market " + market_id_ + " is closed");
    const std::uint64_t seq = next_seq_++;
    const std::int64_t tick = current_tick_.load();
    queue_.push_back({Order{participant, side, action, tick}, seq});
    {
      std::lock_guard rl(results_mu_);
      results_[seq] = OrderResult{};
    }
    return {market_id_, seq, queue_.size(), tick};
  }

  /// Runs one tick on the queued orders.
  void step() {
    std::vector<Pending> batch;
    {
      std::lock_guard lock(queue_mu_);
      batch.assign(queue_.begin(), queue_.end());
      queue_.clear();
    }
    step_with(batch, true);
  }

  /// Runs one tick with explicit orders. With `record` false (replay) the
  /// journal and stream are left alone and the resulting trades are returned
  /// for verification.
  struct Applied {
    std::vector<Trade> trades;
    std::vector<RejectionRecord> rejections;
  };

  Applied step_with(const std::vector<std::pair<Order, std::uint64_t>>& batch, bool record) {
    std::vector<Pending> pending;
    for (const auto& [o, s] : batch) pending.push_back({o, s});
    return step_with(pending, record);
  }

  /// Advances with empty ticks until `tick` ticks have completed.
  void advance_to(std::int64_t tick) {
    while (engine_.state().tick() < tick) step_with(std::vector<Pending>{}, false);
  }

  void close(const std::optional<Outcome>& outcome, bool settle) {
    {
      std::lock_guard lock(queue_mu_);
      accepting_ = false;
      std::lock_guard rl(results_mu_);
      for (const auto& p : queue_)
        results_[p.seq] = OrderResult{OrderState::rejected, std::nullopt, Rejection::market_closed};
      queue_.clear();
    }
    std::lock_guard lock(engine_mu_);
    closing_price_ = engine_.price_yes();
    if (outcome && settle) engine_.settle_all(*outcome);
    else engine_.state().close();
    publish_snapshot_locked();
  }

  /// Consistent view as of the last completed tick.
  std::shared_ptr<const MarketSnapshot> snapshot() const {
    std::shared_ptr<const MarketSnapshot> core;
    {
      std::lock_guard lock(snap_mu_);
      core = snapshot_;
    }
    auto snap = std::make_shared<MarketSnapshot>(*core);
    std::lock_guard lock(trades_mu_);
    for (const auto& point : price_history_)
      if (point.first <= snap->tick) snap->price_history.push_back(point);
    return snap;
  }

  std::vector<Trade> trades_since(std::int64_t tick) const {
    std::lock_guard lock(trades_mu_);
    std::vector<Trade> out;
    for (const Trade& t : published_trades_)
      if (t.tick_executed >= tick) out.push_back(t);
    return out;
  }

  std::optional<OrderResult> order_result(std::uint64_t seq) const {
    std::lock_guard lock(results_mu_);
    auto it = results_.find(seq);
    if (it == results_.end()) return std::nullopt;
    return it->second;
  }

  std::int64_t ticks() const noexcept { return current_tick_.load(); }
  std::int64_t dropped() const noexcept { return dropped_.load(); }
  std::optional<double> closing_price() const noexcept { return closing_price_; }

  std::uint64_t next_seq() const {
    std::lock_guard lock(queue_mu_);
    return next_seq_;
  }
  void set_next_seq(std::uint64_t s) {
    std::lock_guard lock(queue_mu_);
    next_seq_ = std::max(next_seq_, s);
  }

  /// Copies of engine state for equivalence checks and settlement.
  std::vector<Account> agent_accounts() const {
    std::lock_guard lock(engine_mu_);
    return engine_.agent_accounts();
  }
  std::map<std::string, Account> human_accounts() const {
    std::lock_guard lock(engine_mu_);
    return engine_.human_accounts();
  }
  MarketState state() const {
    std::lock_guard lock(engine_mu_);
    return engine_.state();
  }
  MarketRun run_summary(MarketMode mode) const {
    std::lock_guard lock(engine_mu_);
    MarketRun r = finish_run(engine_, claim_, mode);
    r.closing_price_yes = closing_price_.value_or(engine_.price_yes());
    r.ticks_dropped = dropped_.load();
    r.below_tick_floor = cfg_.sim.tick_interval > 0.0 && r.ticks_processed < cfg_.sim.effective_tick_floor;
    return r;
  }

  /// Wall-clock loop: one slot per tick_interval, at most `slots` slots.
  /// Late slots are dropped and counted, never executed late.
  void run_loop(std::stop_token st, double interval, std::int64_t slots) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const auto period = std::chrono::duration<double>(interval);
    std::mutex m;
    std::condition_variable_any cv;
    for (std::int64_t slot = ticks(); slot < slots && !st.stop_requested();) {
      if (interval > 0.0) {
        const auto due = start + std::chrono::duration_cast<clock::duration>(period * static_cast<double>(slot - ticks_at_start_));
        {
          std::unique_lock lock(m);
          cv.wait_until(lock, st, due, [] { return false; });
        }
        if (st.stop_requested()) break;
        const auto late = clock::now() - due;
        const auto behind = static_cast<std::int64_t>(late / period);
        if (behind >= 1) {
          dropped_ += behind;
          slot += behind;
          if (slot >= slots) break;
        }
      }
      step();
      ++slot;
    }
  }

  void mark_loop_start() { ticks_at_start_ = ticks(); }

 private:
  struct Pending {
    Order order;
    std::uint64_t seq = 0;
  };

  Applied step_with(const std::vector<Pending>& batch, bool record) {
    Applied applied;
    std::vector<Order> orders;
    orders.reserve(batch.size());
    for (const auto& p : batch) orders.push_back(p.order);

    TickReport rep;
    {
      std::lock_guard lock(engine_mu_);
      rep = engine_.tick(orders);
      const auto& log = engine_.state().log();
      applied.trades.assign(log.begin() + static_cast<std::ptrdiff_t>(rep.first_trade), log.end());
      applied.rejections = rep.rejections;
    }
    const std::int64_t wall = record ? wall_clock_ms() : 0;
    for (auto& t : applied.trades) t.wall_ms = wall;

    {
      std::lock_guard lock(results_mu_);
      std::size_t ti = rep.agent_trades;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        OrderResult res;
        if (rep.human_results[k]) {
          res.state = OrderState::rejected;
          res.reason = rep.human_results[k];
        } else {
          res.state = OrderState::executed;
          res.trade = applied.trades[ti++];
        }
        results_[batch[k].seq] = res;
      }
    }
    {
      std::lock_guard lock(trades_mu_);
      published_trades_.insert(published_trades_.end(), applied.trades.begin(), applied.trades.end());
    }
    current_tick_ = rep.tick + 1;
    {
      std::lock_guard lock(engine_mu_);
      publish_snapshot_locked();
    }

    if (record) {
      const bool active = !batch.empty() || !applied.trades.empty();
      std::vector<nlohmann::json> recs;
      if (active) recs.push_back(tick_record(rep.tick, batch, applied));
      else if (cfg_.checkpoint_every > 0 && (rep.tick + 1) % cfg_.checkpoint_every == 0)
        recs.push_back({{"type", "checkpoint"}, {"event", event_id_}, {"market", market_id_},
                        {"tick", rep.tick + 1}});
      if (journal_) journal_->append(recs);
      if (active && stream_) {
        nlohmann::json msg = tick_record(rep.tick, batch, applied);
        msg["type"] = "tick";
        stream_->publish(std::move(msg));
      }
    }
    return applied;
  }

  nlohmann::json tick_record(std::int64_t tick, const std::vector<Pending>& batch,
                             const Applied& applied) const {
    nlohmann::json orders = nlohmann::json::array();
    for (const auto& p : batch)
      orders.push_back({{"seq", p.seq},
                        {"owner", p.order.owner_id},
                        {"side", std::string(to_string(p.order.side))},
                        {"action", std::string(to_string(p.order.action))},
                        {"submitted", p.order.tick_submitted}});
    nlohmann::json trades = nlohmann::json::array();
    for (const auto& t : applied.trades) trades.push_back(to_json(t));
    nlohmann::json rejections = nlohmann::json::array();
    for (const auto& r : applied.rejections)
      rejections.push_back({{"owner", r.order.owner_id},
                            {"side", std::string(to_string(r.order.side))},
                            {"action", std::string(to_string(r.order.action))},
                            {"reason", std::string(to_string(r.reason))}});
    double price = 0.5;
    if (!applied.trades.empty()) {
      price = applied.trades.back().spot_price_after;
    } else {
      std::lock_guard lock(snap_mu_);
      price = snapshot_->price_yes;
    }
    return {{"type", "tick"},     {"event", event_id_},      {"market", market_id_},
            {"tick", tick},       {"orders", std::move(orders)}, {"trades", std::move(trades)},
            {"rejections", std::move(rejections)}, {"price", price}};
  }

  void publish_snapshot() {
    std::lock_guard lock(engine_mu_);
    publish_snapshot_locked();
  }

  // Caller holds engine_mu_.
  void publish_snapshot_locked() {
    auto snap = std::make_shared<MarketSnapshot>();
    snap->market_id = market_id_;
    snap->claim_id = claim_.claim_id;
    snap->title = claim_.title;
    snap->tick = engine_.state().tick();
    snap->price_yes = engine_.price_yes();
    snap->open = !engine_.state().closed();
    const auto& log = engine_.state().log();
    const std::size_t n = std::min(log.size(), cfg_.recent_trades);
    snap->recent_trades.assign(log.end() - static_cast<std::ptrdiff_t>(n), log.end());
    snap->humans = engine_.human_accounts();
    {
      std::lock_guard lock(trades_mu_);
      if (price_history_.empty() || price_history_.back().second != snap->price_yes)
        price_history_.emplace_back(snap->tick, snap->price_yes);
    }
    std::lock_guard lock(snap_mu_);
    snapshot_ = std::move(snap);
  }

  std::string event_id_;
  std::string market_id_;
  ClaimRecord claim_;
  mutable std::mutex engine_mu_;
  MarketEngine engine_;
  Journal* journal_;
  EventStream* stream_;
  const ServiceConfig& cfg_;

  mutable std::mutex queue_mu_;
  std::deque<Pending> queue_;
  std::uint64_t next_seq_ = 1;
  bool accepting_ = true;

  mutable std::mutex results_mu_;
  std::map<std::uint64_t, OrderResult> results_;

  mutable std::mutex trades_mu_;
  std::vector<Trade> published_trades_;
  std::vector<std::pair<std::int64_t, double>> price_history_;

  mutable std::mutex snap_mu_;
  std::shared_ptr<const MarketSnapshot> snapshot_;

  std::atomic<std::int64_t> current_tick_{0};
  std::atomic<std::int64_t> dropped_{0};
  std::int64_t ticks_at_start_ = 0;
  std::optional<double> closing_price_;
};

struct EventRuntime {
  std::string event_id;
  Domain discipline = Domain::psychology;
  MarketMode mode = MarketMode::hybrid;
  std::uint64_t seed = 0;
  std::vector<std::string> claim_ids;
  std::vector<std::unique_ptr<LiveMarket>> markets;
  EventStatus status = EventStatus::scheduled;
  std::optional<std::size_t> money_market;  // sealed until close
  std::int64_t opened_ms = 0;
  std::int64_t closed_ms = 0;
  std::vector<MarketRun> runs;
  std::vector<PayoutRecord> payouts;
  std::map<std::string, Outcome> outcomes;
  EventStream stream;
  std::vector<std::jthread> loops;
};

/// Uniform draw of the money market index in [0, 5) from the event seed.
inline std::size_t draw_money_market(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x4d4d));
  return static_cast<std::size_t>(rng() % kMarketsPerEvent);
}

inline std::string market_id_for(const std::string& event_id, const std::string& claim_id) {
  return event_id + "." + claim_id;
}

struct RecoveryReport {
  std::size_t records_applied = 0;
  bool complete = true;
  std::size_t bad_line = 0;
  std::string error;
};

class TradingService {
 public:
  TradingService(ServiceConfig cfg, ClaimSet claims, TrainedMarket trained,
                 std::optional<std::filesystem::path> journal_path = std::nullopt)
      : cfg_(std::move(cfg)), claims_(std::move(claims)), trained_(std::move(trained)) {
    cfg_.sim.validate();
    if (journal_path) journal_ = std::make_unique<Journal>(*journal_path, cfg_.fsync_journal);
  }

  ~TradingService() { stop_all(); }

  TradingService(const TradingService&) = delete;
  TradingService& operator=(const TradingService&) = delete;

  const ServiceConfig& config() const noexcept { return cfg_; }

  // -- sessions ---------------------------------------------------------

  const ParticipantInfo& authenticate(const std::string& token) const {
    auto it = cfg_.participants.find(token);
    if (token.empty() || it == cfg_.participants.end())
      throw ServiceError(ServiceErrc::unauthorized, "unknown session token");
    return it->second;
  }

  bool is_admin(const std::string& token) const {
    return !cfg_.admin_token.empty() && token == cfg_.admin_token;
  }

  // -- lifecycle --------------------------------------------------------

  void create_event(const std::string& event_id, Domain discipline,
                    const std::vector<std::string>& claim_ids,
                    std::optional<MarketMode> mode = std::nullopt,
                    std::optional<std::uint64_t> seed = std::nullopt) {
    std::unique_lock lock(lifecycle_mu_);
    if (event_id.empty()) throw ServiceError(ServiceErrc::bad_request, "event id is empty");
    if (events_.count(event_id))
      throw ServiceError(ServiceErrc::conflict, "event " + event_id + " already exists");
    if (claim_ids.size() != kMarketsPerEvent)
      throw ServiceError(ServiceErrc::bad_request, "an event needs exactly five claims, got " +
                                                       std::to_string(claim_ids.size()));
    std::set<std::string> uniq(claim_ids.begin(), claim_ids.end());
    if (uniq.size() != claim_ids.size())
      throw ServiceError(ServiceErrc::bad_request, "duplicate claim id in event");
    auto ev = std::make_unique<EventRuntime>();
    ev->event_id = event_id;
    ev->discipline = discipline;
    ev->mode = mode.value_or(cfg_.mode);
    ev->seed = seed.value_or(mix_seed(cfg_.sim.seed, hash_string(event_id)));
    ev->claim_ids = claim_ids;
    for (const auto& cid : claim_ids) {
      const ClaimRecord* rec = claims_.find(cid);
      if (!rec) throw ServiceError(ServiceErrc::not_found, "unknown claim " + cid);
      SimConfig sim = cfg_.sim;
      sim.seed = ev->seed;
      MarketEngine engine = make_engine(trained_, *rec, sim, ev->mode);
      auto m = std::make_unique<LiveMarket>(event_id, market_id_for(event_id, cid), *rec,
                                            std::move(engine), journal_.get(), &ev->stream, cfg_);
      market_index_[m->id()] = m.get();
      ev->markets.push_back(std::move(m));
    }
    journal({{"type", "create_event"},
             {"event", event_id},
             {"discipline", std::string(to_string(discipline))},
             {"claims", claim_ids},
             {"mode", std::string(to_string(ev->mode))},
             {"seed", ev->seed}});
    events_[event_id] = std::move(ev);
  }

  void open_event(const std::string& event_id) {
    std::unique_lock lock(lifecycle_mu_);
    EventRuntime& ev = event_locked(event_id);
    if (ev.status != EventStatus::scheduled)
      throw ServiceError(ServiceErrc::conflict, "event " + event_id + " is already " +
                                                    std::string(to_string(ev.status)));
    ev.money_market = draw_money_market(ev.seed);
    ev.status = EventStatus::open;
    ev.opened_ms = wall_clock_ms();
    journal({{"type", "open_event"}, {"event", event_id}, {"money_market", *ev.money_market}});
    if (!cfg_.manual_clock && !replaying_) start_loops(ev);
  }

  struct CloseResult {
    std::vector<MarketRun> runs;
    std::vector<PayoutRecord> payouts;
    std::string money_market_id;
  };

  /// Halts the loops, records closing prices, reveals the money market and
  /// computes payouts. Outcomes (claim id -> R/NR) are optional.
  CloseResult close_event(const std::string& event_id,
                          const std::map<std::string, Outcome>& outcomes = {}) {
    std::unique_lock lock(lifecycle_mu_);
    EventRuntime& ev = event_locked(event_id);
    if (ev.status != EventStatus::open)
      throw ServiceError(ServiceErrc::conflict,
                         "event " + event_id + " is " + std::string(to_string(ev.status)));
    ev.loops.clear();  // jthread joins on destruction
    const bool settle = cfg_.settle_money_market && !outcomes.empty();
    nlohmann::json ticks = nlohmann::json::object();
    for (auto& m : ev.markets) {
      std::optional<Outcome> o;
      if (auto it = outcomes.find(m->claim().claim_id); it != outcomes.end()) o = it->second;
      m->close(o, settle);
      ev.runs.push_back(m->run_summary(ev.mode));
      ticks[m->id()] = m->ticks();
    }
    ev.outcomes = outcomes;
    ev.status = settle ? EventStatus::settled : EventStatus::closed;
    ev.closed_ms = wall_clock_ms();
    ev.payouts = compute_payouts(ev);
    nlohmann::json jo = nlohmann::json::object();
    for (const auto& [cid, o] : outcomes) jo[cid] = std::string(to_string(o));
    journal({{"type", "close_event"}, {"event", event_id}, {"ticks", ticks}, {"outcomes", jo}});
    ev.stream.publish({{"type", "close"},
                       {"event", event_id},
                       {"money_market", ev.markets[*ev.money_market]->id()}});
    ev.stream.close();
    return {ev.runs, ev.payouts, ev.markets[*ev.money_market]->id()};
  }

  /// Manual clock: runs `n` ticks on every market of an open event.
  void advance(const std::string& event_id, std::int64_t n) {
    std::shared_lock lock(lifecycle_mu_);
    EventRuntime& ev = event_locked(event_id);
    if (ev.status != EventStatus::open) throw ServiceError(ServiceErrc::conflict, "event not open");
    if (!cfg_.manual_clock) throw ServiceError(ServiceErrc::conflict, "service runs its own clock");
    for (std::int64_t i = 0; i < n; ++i)
      for (auto& m : ev.markets) m->step();
  }

  /// Blocks until every loop of the event has used its tick budget.
  void wait_for_loops(const std::string& event_id) {
    std::vector<std::jthread> loops;
    {
      std::unique_lock lock(lifecycle_mu_);
      loops.swap(event_locked(event_id).loops);
    }
    for (auto& t : loops) t.join();  // a jthread destructor would request stop first
  }

  // -- trading ----------------------------------------------------------

  OrderAck submit_human_order(const std::string& token, const std::string& market_id,
                              std::string_view side, std::string_view action) {
    const ParticipantInfo& who = authenticate(token);
    const auto s = parse_side(side);
    const auto a = parse_action(action);
    if (!s || !a) throw ServiceError(ServiceErrc::bad_request, "side must be yes|no and action buy|sell");
    std::shared_lock lock(lifecycle_mu_);
    LiveMarket& m = market_locked(market_id);
    const EventRuntime& ev = *events_.at(event_of(market_id));
    if (ev.event_id != who.event_id)
      throw ServiceError(ServiceErrc::unauthorized, "session is not enrolled in this event");
    if (ev.status != EventStatus::open) throw ServiceError(ServiceErrc::conflict, "event is not open");
    if (ev.mode == MarketMode::artificial)
      throw ServiceError(ServiceErrc::conflict, "artificial markets take no human orders");
    return m.enqueue(who.participant_id, *s, *a);
  }

  std::shared_ptr<const MarketSnapshot> market_snapshot(const std::string& market_id) const {
    std::shared_lock lock(lifecycle_mu_);
    return market_locked(market_id).snapshot();
  }

  std::vector<Trade> trades_since(const std::string& market_id, std::int64_t tick) const {
    std::shared_lock lock(lifecycle_mu_);
    return market_locked(market_id).trades_since(tick);
  }

  std::optional<OrderResult> order_result(const std::string& market_id, std::uint64_t seq) const {
    std::shared_lock lock(lifecycle_mu_);
    return market_locked(market_id).order_result(seq);
  }

  double human_stake() const noexcept { return cfg_.sim.human_stake; }

  // -- read side --------------------------------------------------------

  struct EventView {
    std::string event_id;
    Domain discipline;
    MarketMode mode;
    EventStatus status;
    std::vector<std::string> market_ids;
    std::vector<std::string> claim_ids;
    std::int64_t opened_ms, closed_ms;
  };

  std::vector<EventView> events() const {
    std::shared_lock lock(lifecycle_mu_);
    std::vector<EventView> out;
    for (const auto& [id, ev] : events_) out.push_back(view(*ev));
    return out;
  }

  EventView event(const std::string& event_id) const {
    std::shared_lock lock(lifecycle_mu_);
    return view(event_locked(event_id));
  }

  /// Revealed only once the event has closed.
  std::string money_market(const std::string& event_id) const {
    std::shared_lock lock(lifecycle_mu_);
    const EventRuntime& ev = event_locked(event_id);
    if (ev.status == EventStatus::scheduled || ev.status == EventStatus::open)
      throw ServiceError(ServiceErrc::sealed, "money market is sealed until the event closes");
    return ev.markets[*ev.money_market]->id();
  }

  std::vector<PayoutRecord> payouts(const std::string& event_id) const {
    std::shared_lock lock(lifecycle_mu_);
    const EventRuntime& ev = event_locked(event_id);
    if (ev.status == EventStatus::scheduled || ev.status == EventStatus::open)
      throw ServiceError(ServiceErrc::sealed, "payouts are sealed until the event closes");
    return ev.payouts;
  }

  std::vector<MarketRun> runs(const std::string& event_id) const {
    std::shared_lock lock(lifecycle_mu_);
    return event_locked(event_id).runs;
  }

  EventStream& stream(const std::string& event_id) {
    std::shared_lock lock(lifecycle_mu_);
    return event_locked(event_id).stream;
  }

  /// Full engine state of a market, for equivalence checks.
  struct MarketDump {
    MarketState state;
    std::vector<Account> agents;
    std::map<std::string, Account> humans;
  };
  MarketDump dump_market(const std::string& market_id) const {
    std::shared_lock lock(lifecycle_mu_);
    const LiveMarket& m = market_locked(market_id);
    return {m.state(), m.agent_accounts(), m.human_accounts()};
  }

  std::optional<std::filesystem::path> journal_path() const {
    if (!journal_) return std::nullopt;
    return journal_->path();
  }

  void stop_all() {
    std::vector<std::jthread> loops;
    {
      std::unique_lock lock(lifecycle_mu_);
      for (auto& [id, ev] : events_)
        for (auto& t : ev->loops) loops.push_back(std::move(t));
      for (auto& [id, ev] : events_) ev->loops.clear();
    }
    loops.clear();
  }

  // -- recovery ---------------------------------------------------------

  /// Rebuilds a service by replaying `journal_path` through the
  /// deterministic engine. Each recorded tick's trades are checked against
  /// the re-simulated ones; the first mismatch or unreadable line stops
  /// the replay and is reported. New records append to the same journal.
  static std::unique_ptr<TradingService> recover(const std::filesystem::path& journal_path,
                                                 ServiceConfig cfg, ClaimSet claims,
                                                 TrainedMarket trained, RecoveryReport& report) {
    const JournalReadResult read = read_journal(journal_path);
    auto svc = std::make_unique<TradingService>(std::move(cfg), std::move(claims),
                                                std::move(trained), journal_path);
    svc->replaying_ = true;
    report = RecoveryReport{};
    report.complete = read.complete;
    report.bad_line = read.bad_line;
    report.error = read.error;
    std::size_t line = 0;
    for (const auto& rec : read.records) {
      ++line;
      try {
        svc->apply_record(rec);
        ++report.records_applied;
      } catch (const std::exception& e) {
        report.complete = false;
        report.bad_line = line;
        report.error = e.what();
        break;
      }
    }
    svc->replaying_ = false;
    if (!svc->cfg_.manual_clock)
      for (auto& [id, ev] : svc->events_)
        if (ev->status == EventStatus::open) svc->start_loops(*ev);
    return svc;
  }

  nlohmann::json export_event(const std::string& event_id) const {
    std::shared_lock lock(lifecycle_mu_);
    const EventRuntime& ev = event_locked(event_id);
    if (ev.status == EventStatus::scheduled || ev.status == EventStatus::open)
      throw ServiceError(ServiceErrc::sealed, "export is available once the event closes");
    nlohmann::json out;
    out["event"] = event_id;
    out["status"] = std::string(to_string(ev.status));
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : ev.runs) runs.push_back(summary_json(r));
    out["runs"] = runs;
    std::ostringstream csv;
    csv << "market_id,claim_id,mode,closing_price,prediction,trades,ticks,ticks_dropped\n";
    for (std::size_t i = 0; i < ev.runs.size(); ++i) {
      const auto& r = ev.runs[i];
      csv << ev.markets[i]->id() << ',' << r.claim_id << ',' << to_string(r.mode) << ','
          << format_price(r.closing_price_yes) << ',' << to_string(final_prediction(r.closing_price_yes))
          << ',' << r.trades.size() << ',' << r.ticks_processed << ',' << r.ticks_dropped << '\n';
    }
    out["results_csv"] = csv.str();
    nlohmann::json journal = nlohmann::json::array();
    if (journal_) {
      for (auto& rec : read_journal(journal_->path()).records)
        if (rec.value("event", std::string{}) == event_id) journal.push_back(std::move(rec));
    }
    out["journal"] = std::move(journal);
    return out;
  }

 private:
  void journal(const nlohmann::json& rec) {
    if (journal_ && !replaying_) journal_->append(rec);
  }

  void start_loops(EventRuntime& ev) {
    for (auto& m : ev.markets) {
      LiveMarket* mp = m.get();
      mp->mark_loop_start();
      const double interval = cfg_.sim.tick_interval;
      const std::int64_t slots = cfg_.sim.ticks;
      ev.loops.emplace_back([mp, interval, slots](std::stop_token st) { mp->run_loop(st, interval, slots); });
    }
  }

  std::vector<PayoutRecord> compute_payouts(const EventRuntime& ev) const {
    std::map<std::string, std::int64_t> trades;
    for (const auto& [token, p] : cfg_.participants)
      if (p.event_id == ev.event_id) trades.try_emplace(p.participant_id, 0);
    for (const auto& m : ev.markets)
      for (const auto& [owner, acct] : m->human_accounts()) trades[owner] += acct.trade_count;
    const auto money_accounts = ev.markets[*ev.money_market]->human_accounts();
    std::vector<PayoutRecord> out;
    for (const auto& [pid, n] : trades) {
      PayoutRecord r;
      r.participant_id = pid;
      r.trades = n;
      r.eligible = static_cast<std::size_t>(n) >= cfg_.min_trades;
      auto it = money_accounts.find(pid);
      const double cash = it == money_accounts.end() ? cfg_.sim.human_stake : it->second.cash;
      r.money_market_cash = cash;
      r.payout = r.eligible ? cash : 0.0;
      r.flat_compensation = cfg_.flat_compensation;
      out.push_back(r);
    }
    return out;
  }

  void apply_record(const nlohmann::json& rec) {
    const std::string type = rec.at("type").get<std::string>();
    if (type == "create_event") {
      const auto dom = parse_domain(rec.at("discipline").get<std::string>());
      const auto mode = parse_mode(rec.at("mode").get<std::string>());
      if (!dom || !mode) throw DataError("create_event: bad discipline or mode");
      create_event(rec.at("event").get<std::string>(), *dom,
                   rec.at("claims").get<std::vector<std::string>>(), *mode,
                   rec.at("seed").get<std::uint64_t>());
    } else if (type == "open_event") {
      const std::string id = rec.at("event").get<std::string>();
      open_event(id);
      if (*events_.at(id)->money_market != rec.at("money_market").get<std::size_t>())
        throw DataError("open_event: money market draw does not match the journal");
    } else if (type == "tick") {
      LiveMarket& m = market_locked(rec.at("market").get<std::string>());
      const std::int64_t tick = rec.at("tick").get<std::int64_t>();
      if (tick < m.ticks()) throw DataError("tick record out of order");
      m.advance_to(tick);
      std::vector<std::pair<Order, std::uint64_t>> batch;
      std::uint64_t max_seq = 0;
      for (const auto& o : rec.at("orders")) {
        Order order;
        order.owner_id = o.at("owner").get<std::string>();
        const auto s = parse_side(o.at("side").get<std::string>());
        const auto a = parse_action(o.at("action").get<std::string>());
        if (!s || !a) throw DataError("tick record: bad order");
        order.side = *s;
        order.action = *a;
        order.tick_submitted = o.at("submitted").get<std::int64_t>();
        const auto seq = o.at("seq").get<std::uint64_t>();
        max_seq = std::max(max_seq, seq);
        batch.emplace_back(std::move(order), seq);
      }
      const auto applied = m.step_with(batch, false);
      std::vector<Trade> recorded;
      for (const auto& t : rec.at("trades")) recorded.push_back(trade_from_json(t));
      if (recorded != applied.trades)
        throw DataError("tick " + std::to_string(tick) + " of " + m.id() +
                        ": replayed trades differ from the journal");
      m.set_next_seq(max_seq + 1);
    } else if (type == "checkpoint") {
      market_locked(rec.at("market").get<std::string>()).advance_to(rec.at("tick").get<std::int64_t>());
    } else if (type == "close_event") {
      const std::string id = rec.at("event").get<std::string>();
      for (auto it = rec.at("ticks").begin(); it != rec.at("ticks").end(); ++it)
        market_locked(it.key()).advance_to(it.value().get<std::int64_t>());
      std::map<std::string, Outcome> outcomes;
      for (auto it = rec.at("outcomes").begin(); it != rec.at("outcomes").end(); ++it) {
        const auto o = parse_outcome(it.value().get<std::string>());
        if (!o) throw DataError("close_event: bad outcome");
        outcomes[it.key()] = *o;
      }
      close_event(id, outcomes);
    } else {
      throw DataError("unknown journal record type '" + type + "'");
    }
  }

  EventView view(const EventRuntime& ev) const {
    EventView v{ev.event_id, ev.discipline, ev.mode, ev.status, {}, ev.claim_ids, ev.opened_ms, ev.closed_ms};
    for (const auto& m : ev.markets) v.market_ids.push_back(m->id());
    return v;
  }

  EventRuntime& event_locked(const std::string& id) const {
    auto it = events_.find(id);
    if (it == events_.end()) throw ServiceError(ServiceErrc::not_found, "unknown event " + id);
    return *it->second;
  }

  LiveMarket& market_locked(const std::string& id) const {
    auto it = market_index_.find(id);
    if (it == market_index_.end()) throw ServiceError(ServiceErrc::not_found, "unknown market " + id);
    return *it->second;
  }

  std::string event_of(const std::string& market_id) const {
    for (const auto& [id, ev] : events_)
      for (const auto& m : ev->markets)
        if (m->id() == market_id) return id;
    throw ServiceError(ServiceErrc::not_found, "unknown market " + market_id);
  }

  ServiceConfig cfg_;
  ClaimSet claims_;
  TrainedMarket trained_;
  std::unique_ptr<Journal> journal_;
  bool replaying_ = false;
  mutable std::shared_mutex lifecycle_mu_;
  std::map<std::string, std::unique_ptr<EventRuntime>> events_;
  std::map<std::string, LiveMarket*> market_index_;
};

}  // namespace replimarket
