#pragma once

// Run configuration: one nested JSON document with "train", "sim" and
// "service" sections, plus dotted key=value overrides from the command line.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "replimarket/evolution.hpp"
#include "replimarket/market_sim.hpp"
#include "replimarket/service.hpp"
#include "json.hpp"

namespace replimarket {

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void save_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Applies "section.key=value". The value is read as JSON when it parses
/// (numbers, booleans, arrays) and as a plain string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline TrainConfig train_config_from(const nlohmann::json& doc) {
  TrainConfig c;
  if (doc.contains("train")) c = train_config_from_json(doc["train"]);
  c.validate();
  return c;
}

inline SimConfig sim_config_from(const nlohmann::json& doc) {
  SimConfig s;
  if (!doc.contains("sim")) return s;
  const auto& j = doc["sim"];
  try {
    s.ticks = j.value("ticks", s.ticks);
    s.tick_interval = j.value("tick_interval", s.tick_interval);
    s.effective_tick_floor = j.value("effective_tick_floor", std::min(s.effective_tick_floor, s.ticks));
    s.seed = j.value("seed", s.seed);
    s.human_stake = j.value("human_stake", s.human_stake);
    if (j.contains("liquidity") && !j["liquidity"].is_null()) s.liquidity = j["liquidity"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sim: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const SimConfig& s) {
  nlohmann::json j = {{"ticks", s.ticks},
                      {"tick_interval", s.tick_interval},
                      {"effective_tick_floor", s.effective_tick_floor},
                      {"seed", s.seed},
                      {"human_stake", s.human_stake}};
  j["liquidity"] = s.liquidity ? nlohmann::json(*s.liquidity) : nlohmann::json(nullptr);
  return j;
}

inline ServiceConfig service_config_from(const nlohmann::json& doc) {
  ServiceConfig c;
  c.sim = sim_config_from(doc);
  if (!doc.contains("service")) return c;
  const auto& j = doc["service"];
  try {
    if (j.contains("mode")) {
      const auto m = parse_mode(j["mode"].get<std::string>());
      if (!m) throw ConfigError("service.mode must be artificial, hybrid or human-only");
      c.mode = *m;
    }
    c.min_trades = j.value("min_trades", c.min_trades);
    c.flat_compensation = j.value("flat_compensation", c.flat_compensation);
    c.settle_money_market = j.value("settle_money_market", c.settle_money_market);
    c.manual_clock = j.value("manual_clock", c.manual_clock);
    c.fsync_journal = j.value("fsync_journal", c.fsync_journal);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.admin_token = j.value("admin_token", c.admin_token);
    if (j.contains("participants"))
      for (const auto& p : j["participants"])
        c.participants[p.at("token").get<std::string>()] =
            ParticipantInfo{p.at("participant_id").get<std::string>(), p.at("event_id").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("service: ") + e.what());
  }
  return c;
}

}  // namespace replimarket
