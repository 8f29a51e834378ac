// replimarket: ingest claim data, tune and train agent markets, run batch
// simulations, evaluate closing prices, serve live events, replay journals.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "replimarket/config.hpp"
#include "replimarket/evolution.hpp"
#include "replimarket/feature_store.hpp"
#include "replimarket/http_api.hpp"
#include "replimarket/market_sim.hpp"
#include "replimarket/service.hpp"

namespace fs = std::filesystem;
using namespace replimarket;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct Globals {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::optional<std::int64_t> ticks;
  std::string out = "out";
};

nlohmann::json resolve(const Globals& g) {
  nlohmann::json doc = nlohmann::json::object();
  if (!g.config.empty()) doc = load_json_file(g.config);
  for (const auto& o : g.overrides) apply_override(doc, o);
  if (g.seed) {
    doc["train"]["seed"] = *g.seed;
    doc["sim"]["seed"] = *g.seed;
  }
  if (g.ticks) doc["sim"]["ticks"] = *g.ticks;
  if (!g.mode.empty()) doc["service"]["mode"] = g.mode;
  return doc;
}

void write_resolved(const fs::path& out, const std::string& command, const nlohmann::json& doc,
                    const nlohmann::json& inputs) {
  nlohmann::json resolved = doc;
  resolved["command"] = command;
  resolved["inputs"] = inputs;
  resolved["train"] = to_json(train_config_from(doc));
  resolved["sim"] = to_json(sim_config_from(doc));
  save_json_file(out / "resolved_config.json", resolved);
}

ClaimSet load_normalized(const fs::path& claims, const Scaler& scaler, SetRole role) {
  ClaimSet set = ingest(claims, std::nullopt, role);
  set.scaler = scaler;  // files written by `ingest` are already normalized
  return set;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::atomic<bool> g_stop{false};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid human/agent prediction markets for replication forecasting"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--set", g.overrides, "Override, e.g. train.lambda=0.5");
  app.add_option("--seed", g.seed, "Seed for training and simulation");
  app.add_option("--mode", g.mode, "artificial | hybrid | human-only")
      ->check(CLI::IsMember({"artificial", "hybrid", "human-only"}));
  app.add_option("--ticks", g.ticks, "Ticks per simulated market");
  app.add_option("--out", g.out, "Output directory");

  // ingest
  std::string ingest_train, ingest_test;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate, normalize and store claim sets");
  ingest_cmd->add_option("--train", ingest_train, "Training claims (csv|jsonl)")->required();
  ingest_cmd->add_option("--test", ingest_test, "Test claims (csv|jsonl)");

  // train
  std::string train_claims, train_scaler;
  auto* train_cmd = app.add_subcommand("train", "Train an agent population");
  train_cmd->add_option("--claims", train_claims, "Normalized training claims")->required();
  train_cmd->add_option("--scaler", train_scaler, "Scaler written by ingest")->required();

  // tune
  std::string tune_grid, tune_claims, tune_scaler;
  auto* tune_cmd = app.add_subcommand("tune", "Hyperparameter search");
  tune_cmd->add_option("--grid", tune_grid, "Grid JSON")->required();
  tune_cmd->add_option("--claims", tune_claims, "Normalized training claims")->required();
  tune_cmd->add_option("--scaler", tune_scaler, "Scaler written by ingest")->required();

  // simulate
  std::string sim_trained, sim_claims, sim_domain, sim_ids, sim_trace;
  auto* sim_cmd = app.add_subcommand("simulate", "Batch market runs");
  sim_cmd->add_option("--trained", sim_trained, "Trained market JSON")->required();
  sim_cmd->add_option("--claims", sim_claims, "Normalized claims")->required();
  sim_cmd->add_option("--domain", sim_domain, "Only claims of this discipline");
  sim_cmd->add_option("--claim-ids", sim_ids, "Comma-separated claim ids");
  sim_cmd->add_option("--trace", sim_trace, "Scripted human orders (JSONL)");

  // evaluate
  std::vector<std::string> eval_runs;
  std::string eval_truth;
  auto* eval_cmd = app.add_subcommand("evaluate", "MAE and accuracy by discipline");
  eval_cmd->add_option("--runs", eval_runs, "Run summary files or directories")->required();
  eval_cmd->add_option("--truth", eval_truth, "Claims with outcomes")->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the live trading service");

  // replay
  std::string replay_journal;
  auto* replay_cmd = app.add_subcommand("replay", "Rebuild service state from a journal");
  replay_cmd->add_option("--journal", replay_journal, "Journal file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const nlohmann::json doc = resolve(g);
    const fs::path out = g.out;

    if (*ingest_cmd) {
      ClaimSet train = ingest(ingest_train, std::nullopt, SetRole::train);
      const Scaler scaler = fit_scaler(train);
      fs::create_directories(out);
      save_claims(out / "train.jsonl", apply_normalize(train, scaler));
      save_json_file(out / "scaler.json", to_json(scaler));
      std::cout << "train: " << train.size() << " claims\n";
      if (!ingest_test.empty()) {
        ClaimSet test = ingest(ingest_test, std::nullopt, SetRole::test);
        save_claims(out / "test.jsonl", apply_normalize(test, scaler));
        std::cout << "test: " << test.size() << " claims\n";
      }
      write_resolved(out, "ingest", doc, {{"train", ingest_train}, {"test", ingest_test}});
    } else if (*train_cmd) {
      const Scaler scaler = scaler_from_json(load_json_file(train_scaler));
      const ClaimSet corpus = load_normalized(train_claims, scaler, SetRole::train);
      const TrainConfig cfg = train_config_from(doc);
      const TrainedMarket tm = train(corpus, cfg);
      save_json_file(out / "trained.json", to_json(tm));
      write_resolved(out, "train", doc, {{"claims", train_claims}, {"scaler", train_scaler}});
      std::cout << "agents: " << tm.population.size()
                << "  generation: " << tm.population.generation
                << "  training accuracy: " << format_fixed(tm.training_accuracy(), 4) << '\n';
    } else if (*tune_cmd) {
      const Scaler scaler = scaler_from_json(load_json_file(tune_scaler));
      const ClaimSet corpus = load_normalized(tune_claims, scaler, SetRole::train);
      const nlohmann::json grid = load_json_file(tune_grid);
      TrainConfig base = train_config_from(doc);
      if (grid.contains("base")) base = train_config_from_json(grid["base"], base);
      std::vector<GridAxis> axes;
      if (grid.contains("axes"))
        for (const auto& a : grid["axes"])
          axes.push_back({a.at("field").get<std::string>(), a.at("values").get<std::vector<double>>()});
      PlausibilityBounds bounds;
      if (grid.contains("bounds")) {
        bounds.lower = grid["bounds"].value("lower", bounds.lower);
        bounds.upper = grid["bounds"].value("upper", bounds.upper);
        bounds.min_variance = grid["bounds"].value("min_variance", bounds.min_variance);
      }
      const SearchResult res = hyperparameter_search(expand_grid(base, axes), corpus, bounds);
      fs::create_directories(out);
      {
        std::ofstream csv(out / "tune_results.csv");
        write_search_csv(csv, res);
      }
      nlohmann::json best = to_json(res.best_config());
      best["implausible"] = res.implausible;
      save_json_file(out / "best_config.json", best);
      write_resolved(out, "tune", doc, {{"grid", tune_grid}, {"claims", tune_claims}});
      std::cout << "selected row " << res.best << (res.implausible ? " (implausible)" : "") << '\n';
    } else if (*sim_cmd) {
      const TrainedMarket tm = trained_market_from_json(load_json_file(sim_trained));
      if (!tm.scaler) throw DataError("trained market has no scaler");
      ClaimSet claims = load_normalized(sim_claims, *tm.scaler, SetRole::test);
      if (!sim_domain.empty()) {
        const auto d = parse_domain(sim_domain);
        if (!d) throw ConfigError("unknown discipline '" + sim_domain + "'");
        claims = split_by_domain(claims, *d);
      }
      std::vector<const ClaimRecord*> selected;
      if (!sim_ids.empty()) {
        for (const auto& id : split_list(sim_ids)) {
          const ClaimRecord* r = claims.find(id);
          if (!r) throw DataError("unknown claim " + id);
          selected.push_back(r);
        }
      } else {
        for (const auto& r : claims.records) selected.push_back(&r);
      }
      const MarketMode mode = parse_mode(g.mode.empty() ? "artificial" : g.mode).value();
      const SimConfig sim = sim_config_from(doc);
      std::vector<ScriptedOrder> trace;
      if (!sim_trace.empty()) {
        std::ifstream in(sim_trace);
        if (!in) throw DataError("cannot open trace " + sim_trace);
        trace = parse_order_trace(in);
      }
      for (const ClaimRecord* r : selected) {
        const MarketRun run = run_market(tm, *r, sim, mode, trace);
        save_run(out / "runs", run);
        std::cout << r->claim_id << ' ' << format_price(run.closing_price_yes) << ' '
                  << to_string(final_prediction(run.closing_price_yes)) << '\n';
      }
      write_resolved(out, "simulate", doc,
                     {{"trained", sim_trained}, {"claims", sim_claims}, {"mode", to_string(mode)}});
    } else if (*eval_cmd) {
      std::vector<MarketRun> runs;
      for (const auto& p : eval_runs) {
        std::vector<fs::path> files;
        if (fs::is_directory(p)) {
          for (const auto& e : fs::directory_iterator(p))
            if (e.path().string().ends_with(".summary.json")) files.push_back(e.path());
          std::sort(files.begin(), files.end());
        } else {
          files.emplace_back(p);
        }
        for (const auto& f : files) {
          std::ifstream in(f);
          if (!in) throw DataError("cannot open run summary " + f.string());
          try {
            runs.push_back(run_from_summary(nlohmann::json::parse(in)));
          } catch (const nlohmann::json::exception& e) {
            throw DataError(f.string() + ": " + e.what());
          }
        }
      }
      const ClaimSet truth = ingest(eval_truth, std::nullopt, SetRole::test);
      const EvaluationReport rep = evaluate(runs, truth);
      fs::create_directories(out);
      {
        std::ofstream csv(out / "report.csv");
        write_report_csv(csv, rep);
      }
      {
        std::ofstream csv(out / "claims.csv");
        write_claims_report_csv(csv, rep);
      }
      write_report_csv(std::cout, rep);
      write_resolved(out, "evaluate", doc, {{"runs", eval_runs}, {"truth", eval_truth}});
    } else if (*serve_cmd || *replay_cmd) {
      if (!doc.contains("service")) throw ConfigError("serve/replay need a 'service' config section");
      const auto& sj = doc["service"];
      const TrainedMarket tm = trained_market_from_json(load_json_file(sj.at("trained").get<std::string>()));
      if (!tm.scaler) throw DataError("trained market has no scaler");
      ClaimSet claims = load_normalized(sj.at("claims").get<std::string>(), *tm.scaler, SetRole::test);
      ServiceConfig cfg = service_config_from(doc);

      if (*replay_cmd) {
        cfg.manual_clock = true;
        RecoveryReport report;
        auto svc = TradingService::recover(replay_journal, cfg, claims, tm, report);
        nlohmann::json out_doc;
        out_doc["records_applied"] = report.records_applied;
        out_doc["complete"] = report.complete;
        if (!report.complete) out_doc["error"] = {{"line", report.bad_line}, {"message", report.error}};
        nlohmann::json events = nlohmann::json::array();
        for (const auto& ev : svc->events()) {
          nlohmann::json markets = nlohmann::json::array();
          for (const auto& mid : ev.market_ids) {
            const auto snap = svc->market_snapshot(mid);
            markets.push_back({{"market_id", mid}, {"tick", snap->tick},
                               {"price_yes", snap->price_yes}});
          }
          events.push_back({{"event_id", ev.event_id}, {"status", to_string(ev.status)},
                            {"markets", markets}});
        }
        out_doc["events"] = events;
        std::cout << out_doc.dump(2) << '\n';
        return report.complete ? kExitOk : kExitData;
      }

      std::string bind = sj.value("bind", std::string("127.0.0.1:8080"));
      if (const char* env = std::getenv("REPLIMARKET_BIND")) bind = env;
      fs::path journal_dir = sj.value("journal_dir", std::string("journal"));
      if (const char* env = std::getenv("REPLIMARKET_JOURNAL_DIR")) journal_dir = env;
      const fs::path journal = journal_dir / "journal.jsonl";
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw ConfigError("bind address must be host:port");
      const std::string host = bind.substr(0, colon);
      const int port = std::stoi(bind.substr(colon + 1));

      std::unique_ptr<TradingService> svc;
      if (fs::exists(journal)) {
        RecoveryReport report;
        svc = TradingService::recover(journal, cfg, claims, tm, report);
        std::cerr << "recovered " << report.records_applied << " journal records"
                  << (report.complete ? "" : " (stopped at line " + std::to_string(report.bad_line) +
                                                 ": " + report.error + ")")
                  << '\n';
      } else {
        svc = std::make_unique<TradingService>(cfg, claims, tm, journal);
        if (sj.contains("events"))
          for (const auto& e : sj["events"]) {
            const auto dom = parse_domain(e.at("discipline").get<std::string>());
            if (!dom) throw ConfigError("unknown discipline in service.events");
            std::optional<MarketMode> mode;
            if (e.contains("mode")) mode = parse_mode(e["mode"].get<std::string>());
            svc->create_event(e.at("event_id").get<std::string>(), *dom,
                              e.at("claims").get<std::vector<std::string>>(), mode);
            if (e.value("open", false)) svc->open_event(e.at("event_id").get<std::string>());
          }
      }
      write_resolved(out, "serve", doc, {{"bind", bind}, {"journal", journal.string()}});
      HttpApi api(*svc);
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      const int bound = api.start(host, port);
      std::cerr << "serving on " << host << ':' << bound << '\n';
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      api.stop();
      svc->stop_all();
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
