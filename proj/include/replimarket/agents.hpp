#pragma once

// Geometric trading agents. Each agent sits at a training point in
// normalized feature space, specializes in the contract matching that
// point's outcome, and buys when a claim falls inside a ball around it
// whose radius shrinks as the agent's contract gets expensive.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "replimarket/core.hpp"
#include "replimarket/feature_store.hpp"
#include "replimarket/lmsr.hpp"
#include "json.hpp"

namespace replimarket {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) noexcept {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct AgentGenome {
  FeatureVector center{};
  Side side = Side::yes;
  double base_radius = 1.0;
  double reservation_price = 0.6;
  double price_sensitivity = 1.0;

  friend bool operator==(const AgentGenome&, const AgentGenome&) = default;
};

struct Agent {
  std::uint32_t id = 0;
  std::string origin;  // claim the agent (or its ancestor) was spawned from
  AgentGenome genome;

  friend bool operator==(const Agent&, const Agent&) = default;
};

struct Population {
  std::vector<Agent> agents;
  std::int64_t generation = 0;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return agents.size(); }
  friend bool operator==(const Population&, const Population&) = default;
};

struct GenomeDefaults {
  double base_radius = 1.0;
  double reservation_price = 0.7;
  double price_sensitivity = 2.0;
  // Spread of the initial parameters around the defaults.
  double radius_jitter = 0.1;       // log-normal sigma
  double sensitivity_jitter = 0.1;  // log-normal sigma
  double reservation_jitter = 0.05; // additive sigma
};

struct MutationRates {
  double radius_sigma = 0.1;
  double sensitivity_sigma = 0.1;
  double reservation_sigma = 0.03;
};

inline constexpr double kReservationFloor = 0.01;
inline constexpr double kReservationCeil = 0.99;

inline void validate(const AgentGenome& g) {
  if (!(g.base_radius > 0.0)) throw ConfigError("agent base_radius must be > 0");
  if (!(g.reservation_price > 0.0 && g.reservation_price < 1.0))
    throw ConfigError("agent reservation_price must lie in (0,1)");
  if (!(g.price_sensitivity >= 0.0)) throw ConfigError("agent price_sensitivity must be >= 0");
}

inline double squared_distance(const FeatureVector& a, const FeatureVector& b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double distance(const FeatureVector& a, const FeatureVector& b) noexcept {
  return std::sqrt(squared_distance(a, b));
}

inline double effective_radius(const AgentGenome& g, double p_side) noexcept {
  const double over = std::max(0.0, p_side - g.reservation_price);
  return g.base_radius * std::max(0.0, 1.0 - g.price_sensitivity * over);
}

/// Region test against a precomputed distance to the claim.
inline bool in_region_at(const AgentGenome& g, double dist, double p_side) noexcept {
  return dist <= effective_radius(g, p_side);
}

inline bool in_region(const AgentGenome& g, const FeatureVector& x, double p_side) noexcept {
  return in_region_at(g, distance(g.center, x), p_side);
}

/// Relative undervaluation of the agent's contract at price p_side.
inline double undervaluation(const AgentGenome& g, double p_side) noexcept {
  return (g.reservation_price - p_side) / p_side;
}

/// Deterministic part of the buy decision: region and margin.
inline bool wants_to_buy(const AgentGenome& g, double dist, double p_side,
                         double margin) noexcept {
  return in_region_at(g, dist, p_side) && undervaluation(g, p_side) >= margin;
}

/// Participation gate. lambda = 1 always passes, lambda = 0 never does.
inline bool participates(double lambda, Rng& rng) noexcept { return uniform01(rng) < lambda; }

/// Per-tick decision. Agents only ever buy their own side.
inline std::optional<Order> decide(const Agent& agent, const FeatureVector& x,
                                   const MarketState& state, double margin, double lambda,
                                   Rng& rng) {
  const Side side = agent.genome.side;
  const double p = spot_price(state, side);
  if (!wants_to_buy(agent.genome, distance(agent.genome.center, x), p, margin)) return std::nullopt;
  if (!participates(lambda, rng)) return std::nullopt;
  return Order{"agent-" + std::to_string(agent.id), side, Action::buy, state.tick()};
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

/// Child genome. Center and side are inherited verbatim; a zero rate
/// leaves its field untouched.
inline AgentGenome mutate(const AgentGenome& parent, const MutationRates& rates, Rng& rng) {
  AgentGenome child = parent;
  const double zr = standard_normal(rng);
  const double zs = standard_normal(rng);
  const double zp = standard_normal(rng);
  if (rates.radius_sigma > 0.0) child.base_radius *= std::exp(rates.radius_sigma * zr);
  if (rates.sensitivity_sigma > 0.0)
    child.price_sensitivity *= std::exp(rates.sensitivity_sigma * zs);
  if (rates.reservation_sigma > 0.0)
    child.reservation_price = std::clamp(child.reservation_price + rates.reservation_sigma * zp,
                                         kReservationFloor, kReservationCeil);
  return child;
}

inline Population spawn_population(const ClaimSet& train, std::size_t clones_per_point,
                                   const GenomeDefaults& defaults, std::uint64_t seed) {
  if (clones_per_point < 1) throw ConfigError("clones_per_point must be >= 1");
  Population pop;
  pop.seed = seed;
  pop.agents.reserve(train.size() * clones_per_point);
  Rng rng(mix_seed(seed, 0x5a5a));
  const MutationRates spread{defaults.radius_jitter, defaults.sensitivity_jitter,
                             defaults.reservation_jitter};
  AgentGenome base;
  base.base_radius = defaults.base_radius;
  base.reservation_price = defaults.reservation_price;
  base.price_sensitivity = defaults.price_sensitivity;
  validate(base);
  for (const auto& rec : train.records) {
    if (!rec.outcome)
      throw DataError("cannot spawn an agent from unlabeled claim " + rec.claim_id);
    for (std::size_t c = 0; c < clones_per_point; ++c) {
      Agent a;
      a.id = static_cast<std::uint32_t>(pop.agents.size());
      a.origin = rec.claim_id;
      a.genome = base;
      a.genome.center = rec.features;
      a.genome.side = side_for(*rec.outcome);
      a.genome = mutate(a.genome, spread, rng);
      pop.agents.push_back(std::move(a));
    }
  }
  return pop;
}

inline nlohmann::json to_json(const Population& pop) {
  using nlohmann::json;
  json agents = json::array();
  for (const Agent& a : pop.agents) {
    agents.push_back({{"id", a.id},
                      {"origin", a.origin},
                      {"side", std::string(to_string(a.genome.side))},
                      {"base_radius", a.genome.base_radius},
                      {"reservation_price", a.genome.reservation_price},
                      {"price_sensitivity", a.genome.price_sensitivity},
                      {"center", std::vector<double>(a.genome.center.begin(),
                                                     a.genome.center.end())}});
  }
  return {{"generation", pop.generation}, {"seed", pop.seed}, {"agents", std::move(agents)}};
}

inline Population population_from_json(const nlohmann::json& j) {
  Population pop;
  try {
    pop.generation = j.at("generation").get<std::int64_t>();
    pop.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& ja : j.at("agents")) {
      Agent a;
      a.id = ja.at("id").get<std::uint32_t>();
      a.origin = ja.value("origin", std::string{});
      const auto side = parse_side(ja.at("side").get<std::string>());
      if (!side) throw DataError("population: bad agent side");
      a.genome.side = *side;
      a.genome.base_radius = ja.at("base_radius").get<double>();
      a.genome.reservation_price = ja.at("reservation_price").get<double>();
      a.genome.price_sensitivity = ja.at("price_sensitivity").get<double>();
      const auto& c = ja.at("center");
      if (!c.is_array() || c.size() != kFeatureCount)
        throw DataError("population: agent center must hold 41 values");
      for (std::size_t i = 0; i < kFeatureCount; ++i) a.genome.center[i] = c[i].get<double>();
      validate(a.genome);
      pop.agents.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("population: ") + e.what());
  }
  return pop;
}

}  // namespace replimarket
