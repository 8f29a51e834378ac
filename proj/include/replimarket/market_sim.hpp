#pragma once

// Batch market runs for the three experimental arms (artificial, hybrid,
// human-only), closing-price predictions, and per-discipline error reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "replimarket/evolution.hpp"
#include "replimarket/feature_store.hpp"
#include "replimarket/market_engine.hpp"
#include "json.hpp"

namespace replimarket {

enum class MarketMode : std::uint8_t { artificial, hybrid, human_only };

inline constexpr std::string_view to_string(MarketMode m) noexcept {
  switch (m) {
    case MarketMode::artificial: return "artificial";
    case MarketMode::hybrid: return "hybrid";
    case MarketMode::human_only: return "human-only";
  }
  return "unknown";
}

inline std::optional<MarketMode> parse_mode(std::string_view s) noexcept {
  if (s == "artificial") return MarketMode::artificial;
  if (s == "hybrid") return MarketMode::hybrid;
  if (s == "human-only" || s == "human_only" || s == "human") return MarketMode::human_only;
  return std::nullopt;
}

struct SimConfig {
  std::int64_t ticks = 43'200;
  double tick_interval = 0.0;  // seconds; 0 runs ticks back to back
  std::int64_t effective_tick_floor = 39'000;
  std::uint64_t seed = 1;
  double human_stake = 25.0;
  std::optional<double> liquidity;  // overrides the trained market's liquidity

  void validate() const {
    if (ticks < 1) throw ConfigError("ticks must be >= 1");
    if (effective_tick_floor > ticks) throw ConfigError("effective_tick_floor must be <= ticks");
    if (tick_interval < 0.0) throw ConfigError("tick_interval must be >= 0");
    if (!(human_stake >= 0.0)) throw ConfigError("human_stake must be >= 0");
    if (liquidity && !(*liquidity > 0.0)) throw ConfigError("liquidity must be > 0");
  }
};

/// One scripted human order, submitted for execution at `tick`. Entries
/// sharing a tick execute in the order they appear.
struct ScriptedOrder {
  std::int64_t tick = 0;
  Order order;
};

struct MarketRun {
  std::string claim_id;
  Domain domain = Domain::psychology;
  MarketMode mode = MarketMode::artificial;
  double closing_price_yes = 0.5;
  std::vector<Trade> trades;
  std::vector<RejectionRecord> rejections;
  MarketParticipation participation;
  std::int64_t ticks_processed = 0;
  std::int64_t ticks_dropped = 0;
  bool below_tick_floor = false;
};

inline std::uint64_t sim_market_seed(const SimConfig& sim, std::string_view claim_id) {
  return mix_seed(sim.seed, hash_string(claim_id));
}

inline MarketEngine make_engine(const TrainedMarket& trained, const ClaimRecord& claim,
                                const SimConfig& sim, MarketMode mode) {
  std::span<const Agent> agents;
  if (mode != MarketMode::human_only) agents = trained.population.agents;
  return MarketEngine(agents, claim.features, trained.config.rules(),
                      sim.liquidity.value_or(trained.config.liquidity),
                      sim_market_seed(sim, claim.claim_id), sim.human_stake);
}

inline MarketRun finish_run(const MarketEngine& engine, const ClaimRecord& claim,
                            MarketMode mode) {
  MarketRun run;
  run.claim_id = claim.claim_id;
  run.domain = claim.domain;
  run.mode = mode;
  run.closing_price_yes = engine.price_yes();
  run.trades = engine.state().log();
  run.rejections = engine.rejections();
  run.participation = engine.participation();
  run.ticks_processed = engine.state().tick();
  return run;
}

/// Batch run of `sim.ticks` increments. Human orders come from `trace`,
/// which must be sorted by tick; artificial mode refuses a non-empty trace.
inline MarketRun run_market(const TrainedMarket& trained, const ClaimRecord& claim,
                            const SimConfig& sim, MarketMode mode,
                            std::span<const ScriptedOrder> trace = {}) {
  sim.validate();
  if (mode == MarketMode::artificial && !trace.empty())
    throw ConfigError("artificial markets take no human orders");
  if (!std::is_sorted(trace.begin(), trace.end(),
                      [](const auto& a, const auto& b) { return a.tick < b.tick; }))
    throw ConfigError("human order trace must be sorted by tick");
  MarketEngine engine = make_engine(trained, claim, sim, mode);
  std::size_t next = 0;
  std::vector<Order> batch;
  for (std::int64_t t = 0; t < sim.ticks; ++t) {
    batch.clear();
    while (next < trace.size() && trace[next].tick <= t) batch.push_back(trace[next++].order);
    engine.tick(batch);
  }
  return finish_run(engine, claim, mode);
}

inline MarketRun run_artificial(const TrainedMarket& trained, const ClaimRecord& claim,
                                const SimConfig& sim) {
  return run_market(trained, claim, sim, MarketMode::artificial);
}

/// R iff the closing "will replicate" price is at least one half.
inline Outcome final_prediction(double closing_price_yes) noexcept {
  return closing_price_yes >= 0.5 ? Outcome::replicated : Outcome::not_replicated;
}

inline double mae(std::span<const double> prices, std::span<const Outcome> outcomes) {
  if (prices.size() != outcomes.size())
    throw DataError("mae: " + std::to_string(prices.size()) + " prices vs " +
                    std::to_string(outcomes.size()) + " outcomes");
  if (prices.empty()) throw DataError("mae: no markets");
  double s = 0.0;
  for (std::size_t i = 0; i < prices.size(); ++i) s += std::abs(prices[i] - encode(outcomes[i]));
  return s / static_cast<double>(prices.size());
}

struct ClaimEvaluation {
  std::string claim_id;
  Domain domain = Domain::psychology;
  MarketMode mode = MarketMode::artificial;
  double closing_price = 0.5;
  Outcome prediction = Outcome::replicated;
  Outcome outcome = Outcome::replicated;
};

struct GroupMetrics {
  std::size_t markets = 0;
  double mae = 0.0;
  double accuracy = 0.0;
};

struct EvaluationReport {
  std::vector<ClaimEvaluation> claims;
  std::map<std::pair<Domain, MarketMode>, GroupMetrics> by_discipline;
  std::map<MarketMode, GroupMetrics> overall;
};

inline GroupMetrics group_metrics(std::span<const ClaimEvaluation* const> rows) {
  std::vector<double> prices;
  std::vector<Outcome> truth;
  std::size_t correct = 0;
  for (const auto* r : rows) {
    prices.push_back(r->closing_price);
    truth.push_back(r->outcome);
    if (r->prediction == r->outcome) ++correct;
  }
  GroupMetrics g;
  g.markets = rows.size();
  g.mae = mae(prices, truth);
  g.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
  return g;
}

inline EvaluationReport evaluate(std::span<const MarketRun> runs, const ClaimSet& truth) {
  if (runs.empty()) throw DataError("evaluate: no market runs");
  EvaluationReport rep;
  for (const MarketRun& run : runs) {
    const ClaimRecord* rec = truth.find(run.claim_id);
    if (!rec) throw DataError("evaluate: no ground truth for claim " + run.claim_id);
    if (!rec->outcome) throw DataError("evaluate: claim " + run.claim_id + " has no outcome");
    rep.claims.push_back({run.claim_id, rec->domain, run.mode, run.closing_price_yes,
                          final_prediction(run.closing_price_yes), *rec->outcome});
  }
  std::map<std::pair<Domain, MarketMode>, std::vector<const ClaimEvaluation*>> groups;
  std::map<MarketMode, std::vector<const ClaimEvaluation*>> modes;
  for (const auto& c : rep.claims) {
    groups[{c.domain, c.mode}].push_back(&c);
    modes[c.mode].push_back(&c);
  }
  for (const auto& [key, rows] : groups) rep.by_discipline[key] = group_metrics(rows);
  for (const auto& [key, rows] : modes) rep.overall[key] = group_metrics(rows);
  return rep;
}

/// One row per discipline with MAE and accuracy columns per arm; empty
/// cells where an arm was not run.
inline void write_report_csv(std::ostream& out, const EvaluationReport& rep) {
  constexpr MarketMode arms[] = {MarketMode::artificial, MarketMode::hybrid,
                                 MarketMode::human_only};
  out << "discipline,mae_artificial,mae_hybrid,mae_human_only,"
         "accuracy_artificial,accuracy_hybrid,accuracy_human_only\n";
  auto row = [&](std::string_view name, auto lookup) {
    out << name;
    for (MarketMode m : arms) {
      out << ',';
      if (const GroupMetrics* g = lookup(m)) out << format_fixed(g->mae, 3);
    }
    for (MarketMode m : arms) {
      out << ',';
      if (const GroupMetrics* g = lookup(m)) out << format_fixed(g->accuracy, 3);
    }
    out << '\n';
  };
  for (Domain d : kAllDomains) {
    bool any = false;
    for (MarketMode m : arms) any = any || rep.by_discipline.count({d, m});
    if (!any) continue;
    row(to_string(d), [&](MarketMode m) -> const GroupMetrics* {
      auto it = rep.by_discipline.find({d, m});
      return it == rep.by_discipline.end() ? nullptr : &it->second;
    });
  }
  row("all", [&](MarketMode m) -> const GroupMetrics* {
    auto it = rep.overall.find(m);
    return it == rep.overall.end() ? nullptr : &it->second;
  });
}

inline void write_claims_report_csv(std::ostream& out, const EvaluationReport& rep) {
  out << "claim_id,domain,mode,closing_price,prediction,outcome\n";
  for (const auto& c : rep.claims)
    out << c.claim_id << ',' << to_string(c.domain) << ',' << to_string(c.mode) << ','
        << format_price(c.closing_price) << ',' << to_string(c.prediction) << ','
        << to_string(c.outcome) << '\n';
}

inline nlohmann::json summary_json(const MarketRun& run) {
  return {{"claim_id", run.claim_id},
          {"domain", std::string(to_string(run.domain))},
          {"mode", std::string(to_string(run.mode))},
          {"closing_price_yes", run.closing_price_yes},
          {"prediction", std::string(to_string(final_prediction(run.closing_price_yes)))},
          {"trades", run.trades.size()},
          {"rejections", run.rejections.size()},
          {"ticks_processed", run.ticks_processed},
          {"ticks_dropped", run.ticks_dropped},
          {"below_tick_floor", run.below_tick_floor},
          {"participation",
           {{"eligible_agents", run.participation.eligible_agents},
            {"agents_traded", run.participation.agents_traded},
            {"traded_fraction", run.participation.traded_fraction()},
            {"mean_active_fraction", run.participation.mean_active_fraction()}}}};
}

/// Reads a run summary back. Only the fields evaluation needs are restored.
inline MarketRun run_from_summary(const nlohmann::json& j) {
  MarketRun run;
  try {
    run.claim_id = j.at("claim_id").get<std::string>();
    const auto dom = parse_domain(j.at("domain").get<std::string>());
    const auto mode = parse_mode(j.at("mode").get<std::string>());
    if (!dom || !mode) throw DataError("run summary: bad domain or mode");
    run.domain = *dom;
    run.mode = *mode;
    run.closing_price_yes = j.at("closing_price_yes").get<double>();
    run.ticks_processed = j.value("ticks_processed", std::int64_t{0});
    run.ticks_dropped = j.value("ticks_dropped", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("run summary: ") + e.what());
  }
  return run;
}

/// Writes `<dir>/<claim>.<mode>.summary.json` and `.trades.jsonl`.
inline void save_run(const std::filesystem::path& dir, const MarketRun& run) {
  std::filesystem::create_directories(dir);
  const std::string stem = run.claim_id + "." + std::string(to_string(run.mode));
  {
    std::ofstream out(dir / (stem + ".summary.json"));
    if (!out) throw Error("cannot write run summary in " + dir.string());
    out << summary_json(run).dump(2) << '\n';
  }
  std::ofstream log(dir / (stem + ".trades.jsonl"));
  if (!log) throw Error("cannot write trade log in " + dir.string());
  write_trade_log(log, run.trades);
}

inline std::vector<ScriptedOrder> parse_order_trace(std::istream& in) {
  std::vector<ScriptedOrder> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    try {
      const auto j = nlohmann::json::parse(line);
      ScriptedOrder s;
      s.tick = j.at("tick").get<std::int64_t>();
      s.order.owner_id = j.at("owner").get<std::string>();
      const auto side = parse_side(j.at("side").get<std::string>());
      const auto action = parse_action(j.at("action").get<std::string>());
      if (!side || !action) throw DataError("bad side/action");
      s.order.side = *side;
      s.order.action = *action;
      s.order.tick_submitted = s.tick;
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw DataError("order trace row " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace replimarket
