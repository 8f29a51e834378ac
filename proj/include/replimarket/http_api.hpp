#pragma once

// HTTP + JSON binding of TradingService.
//
// Participant routes authenticate with "Authorization: Bearer <token>";
// admin routes with the configured admin token in the same header.
// Money is rendered as 4-decimal strings, prices as 3-decimal strings.

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "replimarket/service.hpp"
#include "httplib.h"
#include "json.hpp"

namespace replimarket {

inline int http_status(ServiceErrc c) noexcept {
  switch (c) {
    case ServiceErrc::bad_request: return 400;
    case ServiceErrc::unauthorized: return 401;
    case ServiceErrc::not_found: return 404;
    case ServiceErrc::conflict: return 409;
    case ServiceErrc::sealed: return 403;
  }
  return 500;
}

inline nlohmann::json trade_view(const Trade& t) {
  return {{"owner", t.order.owner_id},
          {"side", std::string(to_string(t.order.side))},
          {"action", std::string(to_string(t.order.action))},
          {"cost", format_money(t.cost())},
          {"price", format_price(t.spot_price_after)},
          {"tick", t.tick_executed},
          {"ts", t.wall_ms}};
}

inline nlohmann::json account_view(const Account& a) {
  return {{"cash", format_money(a.cash)},
          {"holdings_yes", a.holdings_yes},
          {"holdings_no", a.holdings_no},
          {"trades", a.trade_count}};
}

inline nlohmann::json snapshot_view(const MarketSnapshot& s, const std::string* participant,
                                    double stake) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& [tick, p] : s.price_history) history.push_back({tick, format_price(p)});
  nlohmann::json recent = nlohmann::json::array();
  for (const auto& t : s.recent_trades) recent.push_back(trade_view(t));
  nlohmann::json out = {{"market_id", s.market_id},
                        {"claim_id", s.claim_id},
                        {"title", s.title},
                        {"tick", s.tick},
                        {"open", s.open},
                        {"price_yes", format_price(s.price_yes)},
                        {"price_no", format_price(1.0 - s.price_yes)},
                        {"price_history", std::move(history)},
                        {"recent_trades", std::move(recent)}};
  if (participant) {
    auto it = s.humans.find(*participant);
    out["account"] = it != s.humans.end() ? account_view(it->second)
                                          : account_view(Account{*participant, stake, 0, 0, 0});
  }
  return out;
}

inline nlohmann::json event_view(const TradingService::EventView& v) {
  return {{"event_id", v.event_id},
          {"discipline", std::string(to_string(v.discipline))},
          {"mode", std::string(to_string(v.mode))},
          {"status", std::string(to_string(v.status))},
          {"markets", v.market_ids},
          {"claims", v.claim_ids}};
}

inline nlohmann::json payout_view(const PayoutRecord& p) {
  return {{"participant_id", p.participant_id},
          {"eligible", p.eligible},
          {"trades", p.trades},
          {"money_market_cash", format_money(p.money_market_cash)},
          {"payout", format_money(p.payout)},
          {"flat_compensation", format_money(p.flat_compensation)}};
}

inline std::string bearer_token(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (h.size() > prefix.size() && h.compare(0, prefix.size(), prefix) == 0)
    return h.substr(prefix.size());
  return {};
}

class HttpApi {
 public:
  explicit HttpApi(TradingService& svc) : svc_(svc) { routes(); }
  ~HttpApi() { stop(); }

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ServiceError& e) {
        reply(res, http_status(e.code()), {{"error", e.what()}});
      } catch (const nlohmann::json::exception& e) {
        reply(res, 400, {{"error", std::string("malformed JSON body: ") + e.what()}});
      } catch (const Error& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const std::logic_error& e) {  // stoll and friends on bad parameters
        reply(res, 400, {{"error", std::string("bad parameter: ") + e.what()}});
      }
    };
  }

  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void require_admin(const httplib::Request& req) const {
    if (!svc_.is_admin(bearer_token(req)))
      throw ServiceError(ServiceErrc::unauthorized, "admin token required");
  }

  void routes() {
    server_.Post("/session/login", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto& who = svc_.authenticate(body.at("token").get<std::string>());
      const auto ev = svc_.event(who.event_id);
      reply(res, 200, {{"participant_id", who.participant_id},
                       {"event", event_view(ev)}});
    }));

    server_.Get("/events", guarded([this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& v : svc_.events()) out.push_back(event_view(v));
      reply(res, 200, out);
    }));

    server_.Get(R"(/event/([^/]+)/markets)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto ev = svc_.event(req.matches[1]);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& mid : ev.market_ids) {
        const auto snap = svc_.market_snapshot(mid);
        out.push_back({{"market_id", mid},
                       {"claim_id", snap->claim_id},
                       {"title", snap->title},
                       {"price_yes", format_price(snap->price_yes)},
                       {"open", snap->open}});
      }
      reply(res, 200, out);
    }));

    server_.Get(R"(/market/([^/]+)/snapshot)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto snap = svc_.market_snapshot(req.matches[1]);
      const std::string token = bearer_token(req);
      std::string pid;
      if (!token.empty() && !svc_.is_admin(token)) pid = svc_.authenticate(token).participant_id;
      reply(res, 200, snapshot_view(*snap, pid.empty() ? nullptr : &pid, svc_.human_stake()));
    }));

    server_.Post(R"(/market/([^/]+)/order)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto ack = svc_.submit_human_order(bearer_token(req), req.matches[1],
                                               body.at("side").template get<std::string>(),
                                               body.at("action").template get<std::string>());
      reply(res, 202, {{"status", "queued"},
                       {"market_id", ack.market_id},
                       {"seq", ack.seq},
                       {"queue_position", ack.queue_position},
                       {"tick", ack.tick}});
    }));

    server_.Get(R"(/market/([^/]+)/order/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto r = svc_.order_result(req.matches[1], std::stoull(req.matches[2]));
      if (!r) throw ServiceError(ServiceErrc::not_found, "unknown order");
      nlohmann::json out;
      out["status"] = r->state == OrderState::queued     ? "queued"
                      : r->state == OrderState::executed ? "executed"
                                                         : "rejected";
      if (r->trade) out["trade"] = trade_view(*r->trade);
      if (r->reason) out["reason"] = std::string(to_string(*r->reason));
      reply(res, 200, out);
    }));

    server_.Get(R"(/market/([^/]+)/trades)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::int64_t since = 0;
      if (req.has_param("since")) since = std::stoll(req.get_param_value("since"));
      nlohmann::json out = nlohmann::json::array();
      for (const auto& t : svc_.trades_since(req.matches[1], since)) out.push_back(trade_view(t));
      reply(res, 200, out);
    }));

    server_.Get(R"(/event/([^/]+)/stream)", [this](const httplib::Request& req, httplib::Response& res) {
      EventStream* stream = nullptr;
      try {
        stream = &svc_.stream(req.matches[1]);
      } catch (const ServiceError& e) {
        reply(res, http_status(e.code()), {{"error", e.what()}});
        return;
      }
      auto last = std::make_shared<std::uint64_t>(0);
      res.set_chunked_content_provider(
          "text/event-stream", [stream, last](std::size_t, httplib::DataSink& sink) {
            const auto msgs = stream->wait_after(*last, std::chrono::milliseconds(500));
            for (const auto& m : msgs) {
              const std::string frame =
                  "id: " + std::to_string(m.id) + "\ndata: " + m.body.dump() + "\n\n";
              if (!sink.write(frame.data(), frame.size())) return false;
              *last = m.id;
            }
            if (msgs.empty()) {
              if (stream->closed()) {
                sink.done();
                return true;
              }
              static constexpr char kKeepAlive[] = ": keep-alive\n\n";
              if (!sink.write(kKeepAlive, sizeof kKeepAlive - 1)) return false;
            }
            return true;
          });
    });

    server_.Post("/event", guarded([this](const httplib::Request& req, httplib::Response& res) {
      require_admin(req);
      const auto body = nlohmann::json::parse(req.body);
      const auto dom = parse_domain(body.at("discipline").template get<std::string>());
      if (!dom) throw ServiceError(ServiceErrc::bad_request, "unknown discipline");
      std::optional<MarketMode> mode;
      if (body.contains("mode")) {
        mode = parse_mode(body["mode"].template get<std::string>());
        if (!mode) throw ServiceError(ServiceErrc::bad_request, "unknown mode");
      }
      std::optional<std::uint64_t> seed;
      if (body.contains("seed")) seed = body["seed"].template get<std::uint64_t>();
      const auto id = body.at("event_id").template get<std::string>();
      svc_.create_event(id, *dom, body.at("claim_ids").template get<std::vector<std::string>>(),
                        mode, seed);
      reply(res, 201, event_view(svc_.event(id)));
    }));

    server_.Post(R"(/event/([^/]+)/open)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      require_admin(req);
      svc_.open_event(req.matches[1]);
      reply(res, 200, event_view(svc_.event(req.matches[1])));
    }));

    server_.Post(R"(/event/([^/]+)/close)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      require_admin(req);
      std::map<std::string, Outcome> outcomes;
      if (!req.body.empty()) {
        const auto body = nlohmann::json::parse(req.body);
        if (body.contains("outcomes"))
          for (auto it = body["outcomes"].begin(); it != body["outcomes"].end(); ++it) {
            const auto o = parse_outcome(it.value().template get<std::string>());
            if (!o) throw ServiceError(ServiceErrc::bad_request, "outcome must be R or NR");
            outcomes[it.key()] = *o;
          }
      }
      const auto result = svc_.close_event(req.matches[1], outcomes);
      nlohmann::json runs = nlohmann::json::array();
      for (const auto& r : result.runs)
        runs.push_back({{"claim_id", r.claim_id},
                        {"closing_price_yes", format_price(r.closing_price_yes)},
                        {"prediction", std::string(to_string(final_prediction(r.closing_price_yes)))}});
      reply(res, 200, {{"money_market", result.money_market_id}, {"runs", std::move(runs)}});
    }));

    server_.Get(R"(/event/([^/]+)/payouts)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      require_admin(req);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& p : svc_.payouts(req.matches[1])) out.push_back(payout_view(p));
      reply(res, 200, {{"money_market", svc_.money_market(req.matches[1])}, {"payouts", std::move(out)}});
    }));

    server_.Get(R"(/event/([^/]+)/export)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      require_admin(req);
      reply(res, 200, svc_.export_event(req.matches[1]));
    }));
  }

  TradingService& svc_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace replimarket
