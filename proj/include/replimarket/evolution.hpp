#pragma once

// Mutation-only genetic training of an agent population over a labeled
// corpus, plus the two-criteria hyperparameter search (training accuracy
// gated by how plausible the agents' participation looks).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "replimarket/agents.hpp"
#include "replimarket/feature_store.hpp"
#include "replimarket/market_engine.hpp"
#include "json.hpp"

namespace replimarket {

struct TrainConfig {
  double lambda = 1.0;
  double liquidity = 10.0;
  double percent_difference = 0.0;
  double initial_agent_cash = 500.0;
  std::int64_t market_duration = 60;
  std::size_t clones_per_point = 1;
  std::int64_t generations = 10;
  GenomeDefaults genome;
  MutationRates mutation;
  double selection_fraction = 0.5;
  std::uint64_t seed = 1;
  unsigned threads = 1;  // 0 = hardware concurrency

  AgentRules rules() const { return {lambda, percent_difference, initial_agent_cash}; }

  void validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    if (!(liquidity > 0.0)) throw ConfigError("liquidity must be > 0");
    if (!(percent_difference >= 0.0)) throw ConfigError("percent_difference must be >= 0");
    if (!(initial_agent_cash >= 0.0)) throw ConfigError("initial_agent_cash must be >= 0");
    if (market_duration < 1) throw ConfigError("market_duration must be >= 1");
    if (clones_per_point < 1) throw ConfigError("clones_per_point must be >= 1");
    if (generations < 0) throw ConfigError("generations must be >= 0");
    if (!(selection_fraction > 0.0 && selection_fraction <= 1.0))
      throw ConfigError("selection_fraction must lie in (0,1]");
    if (!(genome.base_radius > 0.0)) throw ConfigError("base_radius must be > 0");
    if (!(genome.reservation_price > 0.0 && genome.reservation_price < 1.0))
      throw ConfigError("reservation_price must lie in (0,1)");
    if (!(genome.price_sensitivity >= 0.0)) throw ConfigError("price_sensitivity must be >= 0");
  }
};

/// Sets a numeric TrainConfig field by name; used by grids and overrides.
inline void set_field(TrainConfig& c, std::string_view key, double v) {
  if (key == "lambda") c.lambda = v;
  else if (key == "liquidity") c.liquidity = v;
  else if (key == "percent_difference") c.percent_difference = v;
  else if (key == "initial_agent_cash") c.initial_agent_cash = v;
  else if (key == "market_duration") c.market_duration = static_cast<std::int64_t>(v);
  else if (key == "clones_per_point") c.clones_per_point = static_cast<std::size_t>(v);
  else if (key == "generations") c.generations = static_cast<std::int64_t>(v);
  else if (key == "selection_fraction") c.selection_fraction = v;
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(v);
  else if (key == "threads") c.threads = static_cast<unsigned>(v);
  else if (key == "base_radius") c.genome.base_radius = v;
  else if (key == "reservation_price") c.genome.reservation_price = v;
  else if (key == "price_sensitivity") c.genome.price_sensitivity = v;
  else if (key == "radius_jitter") c.genome.radius_jitter = v;
  else if (key == "sensitivity_jitter") c.genome.sensitivity_jitter = v;
  else if (key == "reservation_jitter") c.genome.reservation_jitter = v;
  else if (key == "radius_sigma") c.mutation.radius_sigma = v;
  else if (key == "sensitivity_sigma") c.mutation.sensitivity_sigma = v;
  else if (key == "reservation_sigma") c.mutation.reservation_sigma = v;
  else throw ConfigError("unknown training parameter '" + std::string(key) + "'");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"liquidity", c.liquidity},
          {"percent_difference", c.percent_difference},
          {"initial_agent_cash", c.initial_agent_cash},
          {"market_duration", c.market_duration},
          {"clones_per_point", c.clones_per_point},
          {"generations", c.generations},
          {"selection_fraction", c.selection_fraction},
          {"seed", c.seed},
          {"base_radius", c.genome.base_radius},
          {"reservation_price", c.genome.reservation_price},
          {"price_sensitivity", c.genome.price_sensitivity},
          {"radius_jitter", c.genome.radius_jitter},
          {"sensitivity_jitter", c.genome.sensitivity_jitter},
          {"reservation_jitter", c.genome.reservation_jitter},
          {"radius_sigma", c.mutation.radius_sigma},
          {"sensitivity_sigma", c.mutation.sensitivity_sigma},
          {"reservation_sigma", c.mutation.reservation_sigma}};
}

/// Missing keys keep their defaults; unknown keys and invalid values are errors.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw ConfigError("training config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "threads" && !it.value().is_number()) continue;
    if (!it.value().is_number())
      throw ConfigError("training parameter '" + it.key() + "' must be numeric");
    if (it.key() == "seed") base.seed = it.value().get<std::uint64_t>();
    else set_field(base, it.key(), it.value().get<double>());
  }
  base.validate();
  return base;
}

struct ParticipationStats {
  std::vector<double> per_claim;   // fraction of eligible agents that traded at least once
  double mean_active_per_tick = 0.0;

  double mean() const noexcept {
    if (per_claim.empty()) return 0.0;
    return std::accumulate(per_claim.begin(), per_claim.end(), 0.0) / per_claim.size();
  }
  double variance() const noexcept {
    if (per_claim.empty()) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : per_claim) s += (v - m) * (v - m);
    return s / per_claim.size();
  }
};

struct TrainingMarketResult {
  double closing_price = 0.5;
  std::vector<double> pnl;  // per agent, final cash - initial cash
  MarketParticipation participation;
};

inline std::uint64_t market_seed(std::uint64_t seed, std::string_view claim_id) {
  return mix_seed(seed, hash_string(claim_id));
}

/// One agents-only market on a labeled claim, settled at its outcome.
/// The rng seed depends only on (config seed, claim), so every generation
/// is evaluated under the same draws.
inline TrainingMarketResult run_training_market(const Population& pop, const ClaimRecord& claim,
                                                const TrainConfig& config,
                                                std::optional<std::string> exclude_origin = {}) {
  if (!claim.outcome) throw DataError("training claim " + claim.claim_id + " is unlabeled");
  MarketEngine m(pop.agents, claim.features, config.rules(), config.liquidity,
                 market_seed(config.seed, claim.claim_id), 0.0, std::move(exclude_origin));
  m.run(config.market_duration);
  TrainingMarketResult r;
  r.closing_price = m.price_yes();
  r.participation = m.participation();
  m.settle_all(*claim.outcome);
  r.pnl.reserve(pop.size());
  for (const Account& a : m.agent_accounts()) r.pnl.push_back(a.cash - config.initial_agent_cash);
  return r;
}

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots so the outcome is independent of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (unsigned w = 0; w < threads; ++w)
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += threads) fn(i);
    });
}

/// Sum of per-market P&L over the epoch, per agent.
inline std::vector<double> fitness(const std::vector<std::vector<double>>& pnl_per_market,
                                   std::size_t agents) {
  std::vector<double> f(agents, 0.0);
  for (const auto& market : pnl_per_market) {
    if (market.size() != agents) throw StateError("P&L vector size does not match population");
    for (std::size_t i = 0; i < agents; ++i) f[i] += market[i];
  }
  return f;
}

/// Agent indices by descending fitness, ties broken by ascending id.
inline std::vector<std::size_t> rank_by_fitness(const Population& pop,
                                                const std::vector<double>& fit) {
  std::vector<std::size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (fit[a] != fit[b]) return fit[a] > fit[b];
    return pop.agents[a].id < pop.agents[b].id;
  });
  return order;
}

/// Elitist truncation. The top `selection_fraction` survive unchanged
/// unless their fitness is negative; offspring of the survivors (round
/// robin, best first) refill the population. Survivors come first in the
/// new id order, ranked by fitness.
inline Population evolve_generation(const Population& pop, const std::vector<double>& fit,
                                    double selection_fraction, const MutationRates& rates,
                                    Rng& rng) {
  if (pop.agents.empty()) throw StateError("cannot evolve an empty population");
  if (fit.size() != pop.size()) throw StateError("fitness vector size does not match population");
  const auto order = rank_by_fitness(pop, fit);
  const std::size_t quota = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(selection_fraction * pop.size() + 1e-9)));

  std::vector<const Agent*> survivors;
  for (std::size_t k = 0; k < quota; ++k)
    if (fit[order[k]] >= 0.0) survivors.push_back(&pop.agents[order[k]]);
  if (survivors.empty()) survivors.push_back(&pop.agents[order.front()]);

  Population next;
  next.seed = pop.seed;
  next.generation = pop.generation + 1;
  next.agents.reserve(pop.size());
  for (const Agent* a : survivors) {
    Agent copy = *a;
    copy.id = static_cast<std::uint32_t>(next.agents.size());
    next.agents.push_back(std::move(copy));
  }
  for (std::size_t j = 0; next.agents.size() < pop.size(); ++j) {
    const Agent& parent = *survivors[j % survivors.size()];
    Agent child;
    child.id = static_cast<std::uint32_t>(next.agents.size());
    child.origin = parent.origin;
    child.genome = mutate(parent.genome, rates, rng);
    next.agents.push_back(std::move(child));
  }
  return next;
}

struct GenerationMetrics {
  std::int64_t generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  double training_accuracy = 0.0;
  double mean_participation = 0.0;

  friend bool operator==(const GenerationMetrics&, const GenerationMetrics&) = default;
};

struct EpochResult {
  std::vector<double> fitness;
  std::vector<double> closing_prices;
  GenerationMetrics metrics;
};

inline bool predicts_correctly(double closing_price, Outcome truth) {
  return (closing_price >= 0.5) == (truth == Outcome::replicated);
}

/// Runs one market per corpus claim, in corpus order for the reduction.
inline EpochResult run_epoch(const Population& pop, const ClaimSet& corpus,
                             const TrainConfig& config) {
  std::vector<TrainingMarketResult> results(corpus.size());
  parallel_for(corpus.size(), config.threads, [&](std::size_t i) {
    results[i] = run_training_market(pop, corpus.records[i], config);
  });
  std::vector<std::vector<double>> pnl;
  pnl.reserve(results.size());
  EpochResult e;
  std::size_t correct = 0;
  double participation = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    pnl.push_back(std::move(results[i].pnl));
    e.closing_prices.push_back(results[i].closing_price);
    if (predicts_correctly(results[i].closing_price, *corpus.records[i].outcome)) ++correct;
    participation += results[i].participation.traded_fraction();
  }
  e.fitness = fitness(pnl, pop.size());
  e.metrics.generation = pop.generation;
  if (!e.fitness.empty()) {
    e.metrics.best_fitness = *std::max_element(e.fitness.begin(), e.fitness.end());
    e.metrics.mean_fitness =
        std::accumulate(e.fitness.begin(), e.fitness.end(), 0.0) / e.fitness.size();
  }
  if (!corpus.empty()) {
    e.metrics.training_accuracy = static_cast<double>(correct) / corpus.size();
    e.metrics.mean_participation = participation / corpus.size();
  }
  return e;
}

struct TrainedMarket {
  Population population;
  TrainConfig config;
  std::optional<Scaler> scaler;
  std::vector<GenerationMetrics> history;  // one entry per evaluated generation

  double training_accuracy() const noexcept {
    return history.empty() ? 0.0 : history.back().training_accuracy;
  }
};

inline void require_trainable(const ClaimSet& corpus) {
  if (corpus.empty()) throw DataError("training corpus is empty");
  for (const auto& r : corpus.records)
    if (!r.outcome) throw DataError("training claim " + r.claim_id + " is unlabeled");
}

/// Spawn, then `generations` rounds of (epoch, fitness, evolve). The final
/// population is evaluated once more so its accuracy is on record.
inline TrainedMarket train(const ClaimSet& corpus, const TrainConfig& config) {
  config.validate();
  require_trainable(corpus);
  TrainedMarket tm;
  tm.config = config;
  tm.scaler = corpus.scaler;
  Population pop = spawn_population(corpus, config.clones_per_point, config.genome, config.seed);
  for (std::int64_t g = 0; g < config.generations; ++g) {
    EpochResult e = run_epoch(pop, corpus, config);
    tm.history.push_back(e.metrics);
    Rng rng(mix_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(g)));
    pop = evolve_generation(pop, e.fitness, config.selection_fraction, config.mutation, rng);
  }
  tm.history.push_back(run_epoch(pop, corpus, config).metrics);
  tm.population = std::move(pop);
  return tm;
}

/// Leave-one-out participation: each claim's market excludes the agents
/// descended from that claim, so it measures how agents see unseen points.
inline ParticipationStats evaluate_participation(const Population& pop, const ClaimSet& corpus,
                                                 const TrainConfig& config) {
  std::vector<MarketParticipation> parts(corpus.size());
  parallel_for(corpus.size(), config.threads, [&](std::size_t i) {
    const auto& rec = corpus.records[i];
    MarketEngine m(pop.agents, rec.features, config.rules(), config.liquidity,
                   market_seed(config.seed ^ 0xE7A1, rec.claim_id), 0.0, rec.claim_id);
    m.run(config.market_duration);
    parts[i] = m.participation();
  });
  ParticipationStats s;
  double active = 0.0;
  for (const auto& p : parts) {
    s.per_claim.push_back(p.traded_fraction());
    active += p.mean_active_fraction();
  }
  if (!parts.empty()) s.mean_active_per_tick = active / parts.size();
  return s;
}

struct PlausibilityBounds {
  double lower = 0.05;
  double upper = 0.95;
  double min_variance = 1e-6;
};

struct PlausibilityResult {
  bool pass = false;
  double score = 0.0;
  std::string reason;
};

inline PlausibilityResult participation_plausibility(const ParticipationStats& stats,
                                                     const PlausibilityBounds& bounds = {}) {
  const double m = stats.mean();
  const double v = stats.variance();
  PlausibilityResult r;
  r.score = 4.0 * m * (1.0 - m) * (v / (v + 0.01));
  if (stats.per_claim.empty()) r.reason = "no evaluation markets";
  else if (m < bounds.lower) r.reason = "negligible participation";
  else if (m > bounds.upper) r.reason = "universal participation";
  else if (v <= bounds.min_variance) r.reason = "no differentiation across claims";
  else r.pass = true;
  if (!r.pass) r.score = 0.0;
  return r;
}

struct GridAxis {
  std::string field;
  std::vector<double> values;
};

struct SearchRow {
  TrainConfig config;
  double accuracy = 0.0;
  ParticipationStats participation;
  PlausibilityResult plausibility;
};

struct SearchResult {
  std::vector<SearchRow> rows;
  std::size_t best = 0;
  bool implausible = false;  // no configuration passed the plausibility gate

  const TrainConfig& best_config() const { return rows.at(best).config; }
};

/// Cartesian product of the axes applied on top of `base`, first axis
/// varying slowest.
inline std::vector<TrainConfig> expand_grid(const TrainConfig& base,
                                            const std::vector<GridAxis>& axes) {
  std::vector<TrainConfig> out{base};
  for (const auto& axis : axes) {
    if (axis.values.empty()) throw ConfigError("grid axis '" + axis.field + "' has no values");
    std::vector<TrainConfig> next;
    for (const auto& c : out)
      for (double v : axis.values) {
        TrainConfig x = c;
        set_field(x, axis.field, v);
        next.push_back(x);
      }
    out = std::move(next);
  }
  return out;
}

/// Highest accuracy among plausible rows; ties go to lower lambda, then
/// lower liquidity, then grid order. Falls back to all rows (flagged) when
/// nothing is plausible.
inline std::size_t select_best(const std::vector<SearchRow>& rows, bool& implausible) {
  if (rows.empty()) throw ConfigError("hyperparameter grid is empty");
  const bool any_pass =
      std::any_of(rows.begin(), rows.end(), [](const SearchRow& r) { return r.plausibility.pass; });
  implausible = !any_pass;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (any_pass && !rows[i].plausibility.pass) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& a = rows[i];
    const auto& b = rows[*best];
    if (a.accuracy != b.accuracy) {
      if (a.accuracy > b.accuracy) best = i;
    } else if (a.config.lambda != b.config.lambda) {
      if (a.config.lambda < b.config.lambda) best = i;
    } else if (a.config.liquidity < b.config.liquidity) {
      best = i;
    }
  }
  return *best;
}

inline SearchResult hyperparameter_search(const std::vector<TrainConfig>& grid,
                                          const ClaimSet& corpus,
                                          const PlausibilityBounds& bounds = {}) {
  SearchResult res;
  for (const auto& cfg : grid) {
    SearchRow row;
    row.config = cfg;
    const TrainedMarket tm = train(corpus, cfg);
    row.accuracy = tm.training_accuracy();
    row.participation = evaluate_participation(tm.population, corpus, cfg);
    row.plausibility = participation_plausibility(row.participation, bounds);
    res.rows.push_back(std::move(row));
  }
  res.best = select_best(res.rows, res.implausible);
  return res;
}

inline void write_search_csv(std::ostream& out, const SearchResult& res) {
  out << "index,lambda,liquidity,percent_difference,initial_agent_cash,market_duration,"
         "base_radius,reservation_price,price_sensitivity,generations,accuracy,"
         "mean_participation,participation_variance,plausible,plausibility_score,reason,selected\n";
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& r = res.rows[i];
    const auto& c = r.config;
    out << i << ',' << c.lambda << ',' << c.liquidity << ',' << c.percent_difference << ','
        << c.initial_agent_cash << ',' << c.market_duration << ',' << c.genome.base_radius << ','
        << c.genome.reservation_price << ',' << c.genome.price_sensitivity << ','
        << c.generations << ',' << format_fixed(r.accuracy, 6) << ','
        << format_fixed(r.participation.mean(), 6) << ','
        << format_fixed(r.participation.variance(), 6) << ','
        << (r.plausibility.pass ? "true" : "false") << ','
        << format_fixed(r.plausibility.score, 6) << ',' << r.plausibility.reason << ','
        << (i == res.best ? (res.implausible ? "implausible" : "true") : "false") << '\n';
  }
}

inline nlohmann::json to_json(const GenerationMetrics& m) {
  return {{"generation", m.generation},
          {"best_fitness", m.best_fitness},
          {"mean_fitness", m.mean_fitness},
          {"training_accuracy", m.training_accuracy},
          {"mean_participation", m.mean_participation}};
}

inline nlohmann::json to_json(const TrainedMarket& tm) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& m : tm.history) hist.push_back(to_json(m));
  return {{"config", to_json(tm.config)},
          {"scaler", tm.scaler ? to_json(*tm.scaler) : nlohmann::json(nullptr)},
          {"population", to_json(tm.population)},
          {"history", std::move(hist)}};
}

inline TrainedMarket trained_market_from_json(const nlohmann::json& j) {
  TrainedMarket tm;
  try {
    tm.config = train_config_from_json(j.at("config"));
    if (j.contains("scaler") && !j["scaler"].is_null()) tm.scaler = scaler_from_json(j["scaler"]);
    tm.population = population_from_json(j.at("population"));
    for (const auto& h : j.at("history")) {
      GenerationMetrics m;
      m.generation = h.at("generation").get<std::int64_t>();
      m.best_fitness = h.at("best_fitness").get<double>();
      m.mean_fitness = h.at("mean_fitness").get<double>();
      m.training_accuracy = h.at("training_accuracy").get<double>();
      m.mean_participation = h.at("mean_participation").get<double>();
      tm.history.push_back(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("trained market: ") + e.what());
  }
  return tm;
}

}  // namespace replimarket
