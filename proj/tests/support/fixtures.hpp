#pragma once

// Shared test data: the published reference markets, a two-cluster toy
// corpus, synthetic claim files, and scratch directories.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "replimarket/evolution.hpp"
#include "replimarket/feature_store.hpp"
#include "replimarket/market_sim.hpp"

#ifndef REPLIMARKET_DATA_DIR
#define REPLIMARKET_DATA_DIR "data"
#endif

namespace replimarket::fx {

inline std::filesystem::path data_dir() { return REPLIMARKET_DATA_DIR; }

struct ReferenceMarket {
  std::string claim_id;
  Domain domain;
  MarketMode mode;
  double closing_price;
  Outcome outcome;
  Outcome listed_prediction;
};

inline std::vector<ReferenceMarket> reference_markets(
    const std::filesystem::path& path = data_dir() / "reference_markets.csv") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ReferenceMarket> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) throw DataError("reference row has " + std::to_string(f.size()) + " fields");
    out.push_back({f[0], parse_domain(f[1]).value(), parse_mode(f[2]).value(), std::stod(f[3]),
                   parse_outcome(f[4]).value(), parse_outcome(f[5]).value()});
  }
  return out;
}

inline MarketRun as_run(const ReferenceMarket& m) {
  MarketRun r;
  r.claim_id = m.claim_id;
  r.domain = m.domain;
  r.mode = m.mode;
  r.closing_price_yes = m.closing_price;
  return r;
}

/// Ground truth as a claim set (features are irrelevant to evaluation).
inline ClaimSet reference_truth(const std::vector<ReferenceMarket>& markets) {
  ClaimSet set;
  set.role = SetRole::test;
  for (const auto& m : markets) {
    if (set.find(m.claim_id)) continue;
    ClaimRecord r;
    r.claim_id = m.claim_id;
    r.domain = m.domain;
    r.outcome = m.outcome;
    r.features.fill(0.0);
    set.records.push_back(r);
  }
  return set;
}

/// Two separable clusters: 12 replicated claims near 0.2 and 8 failed ones
/// near 0.8 in every feature. Returned already normalized.
inline ClaimSet toy_corpus(std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  ClaimSet set;
  for (int i = 0; i < 20; ++i) {
    ClaimRecord r;
    const bool replicated = i < 12;
    r.claim_id = (replicated ? "r" : "n") + std::to_string(i);
    r.domain = Domain::psychology;
    r.outcome = replicated ? Outcome::replicated : Outcome::not_replicated;
    for (auto& v : r.features) v = (replicated ? 0.2 : 0.8) + jitter(rng);
    set.records.push_back(r);
  }
  return fit_normalize(set);
}

/// Small-cash setting: roughly one share per agent per market, radius 1 in
/// normalized space (each region covers its own cluster only).
inline TrainConfig toy_config() {
  TrainConfig c;
  c.lambda = 1.0;
  c.liquidity = 5.0;
  c.percent_difference = 0.0;
  c.initial_agent_cash = 1.0;
  c.market_duration = 60;
  c.generations = 20;
  c.genome.base_radius = 1.0;
  c.seed = 11;
  return c;
}

/// Regions start wide enough to cover both clusters, so generation 0
/// misclassifies and the GA has to shrink radii.
inline TrainConfig overlapping_toy_config() {
  TrainConfig c = toy_config();
  c.genome.base_radius = 6.0;
  c.initial_agent_cash = 0.6;
  c.mutation.radius_sigma = 0.3;
  c.seed = 3;
  return c;
}

/// Base for the degenerate-radius grid. No generations, so each row is
/// gated on the population exactly as constructed; a high reservation price
/// keeps price limits from masking how wide the regions are.
inline TrainConfig plausibility_base_config() {
  TrainConfig c = toy_config();
  c.genome.reservation_price = 0.98;
  c.genome.price_sensitivity = 0.0;
  c.generations = 0;
  return c;
}

inline FeatureVector random_features(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 100.0);
  FeatureVector f;
  for (auto& v : f) v = u(rng);
  return f;
}

/// Discipline counts of the 402-study training corpus.
inline std::vector<std::pair<Domain, int>> corpus_domain_counts() {
  return {{Domain::psychology, 252}, {Domain::economics, 99},  {Domain::marketing, 20},
          {Domain::sociology, 8},    {Domain::political_science, 6},
          {Domain::education, 5},    {Domain::management, 5},  {Domain::health, 4},
          {Domain::criminology, 2},  {Domain::public_administration, 1}};
}

/// Synthetic 402-row training set shaped like the real corpus (labels
/// alternate, ~2% of values missing).
inline ClaimSet synthetic_training_set(std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution missing(0.02);
  ClaimSet set;
  int n = 0;
  for (const auto& [d, count] : corpus_domain_counts())
    for (int i = 0; i < count; ++i, ++n) {
      ClaimRecord r;
      r.claim_id = "t" + std::to_string(n);
      r.domain = d;
      r.outcome = n % 3 == 0 ? Outcome::not_replicated : Outcome::replicated;
      r.features = random_features(rng);
      for (auto& v : r.features)
        if (missing(rng)) v = kMissing;
      set.records.push_back(r);
    }
  return set;
}

/// Synthetic 30-row test set: five claims in each of six disciplines.
inline ClaimSet synthetic_test_set(std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  const Domain ds[] = {Domain::economics, Domain::sociology, Domain::psychology,
                       Domain::marketing, Domain::political_science, Domain::education};
  ClaimSet set;
  set.role = SetRole::test;
  int n = 0;
  for (Domain d : ds)
    for (int i = 0; i < 5; ++i, ++n) {
      ClaimRecord r;
      r.claim_id = "s" + std::to_string(n);
      r.domain = d;
      r.outcome = n % 2 == 0 ? Outcome::replicated : Outcome::not_replicated;
      r.features = random_features(rng);
      set.records.push_back(r);
    }
  return set;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("replimarket_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace replimarket::fx
