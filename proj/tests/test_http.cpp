#include <gtest/gtest.h>

#include <regex>
#include <thread>

#include "replimarket/http_api.hpp"
#include "support/service_fixture.hpp"

using namespace replimarket;
using nlohmann::json;

namespace {

class HttpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    svc_ = fx::make_service();
    api_ = std::make_unique<HttpApi>(*svc_);
    port_ = api_->start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(10, 0);
  }
  void TearDown() override { api_->stop(); }

  httplib::Headers auth(const std::string& token) {
    return {{"Authorization", "Bearer " + token}};
  }

  httplib::Result post(const std::string& path, const json& body, const std::string& token) {
    return client_->Post(path, auth(token), body.dump(), "application/json");
  }

  httplib::Result get(const std::string& path, const std::string& token = "") {
    return token.empty() ? client_->Get(path) : client_->Get(path, auth(token));
  }

  void create_and_open(const std::string& mode = "hybrid") {
    auto r = post("/event",
                  {{"event_id", "ev1"},
                   {"discipline", "economics"},
                   {"claim_ids", fx::event_claims()},
                   {"mode", mode}},
                  "admin-secret");
    ASSERT_EQ(r->status, 201) << r->body;
    r = post("/event/ev1/open", json::object(), "admin-secret");
    ASSERT_EQ(r->status, 200) << r->body;
  }

  std::unique_ptr<TradingService> svc_;
  std::unique_ptr<HttpApi> api_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

const std::regex kMoney(R"(^-?\d+\.\d{4}$)");
const std::regex kPrice(R"(^[01]\.\d{3}$)");

}  // namespace

TEST_F(HttpTest, AdminRoutesNeedTheAdminToken) {
  const json body = {{"event_id", "ev1"}, {"discipline", "economics"}, {"claim_ids", fx::event_claims()}};
  EXPECT_EQ(post("/event", body, "tok-a")->status, 401);
  EXPECT_EQ(client_->Post("/event", body.dump(), "application/json")->status, 401);
  EXPECT_EQ(post("/event", body, "admin-secret")->status, 201);
  EXPECT_EQ(post("/event", body, "admin-secret")->status, 409);
  json four = body;
  four["event_id"] = "ev9";
  four["claim_ids"] = {"r0", "r1", "r2", "r3"};
  EXPECT_EQ(post("/event", four, "admin-secret")->status, 400);
  EXPECT_EQ(post("/event/ev1/open", json::object(), "tok-a")->status, 401);
  EXPECT_EQ(get("/event/ev1/payouts", "tok-a")->status, 401);
  EXPECT_EQ(client_->Post("/event", "{not json", "application/json")->status, 401);
  EXPECT_EQ(client_->Post("/event", auth("admin-secret"), "{not json", "application/json")->status, 400);
}

TEST_F(HttpTest, LoginEventsAndMarkets) {
  create_and_open();
  auto r = client_->Post("/session/login", json{{"token", "tok-a"}}.dump(), "application/json");
  ASSERT_EQ(r->status, 200);
  auto j = json::parse(r->body);
  EXPECT_EQ(j["participant_id"], "alice");
  EXPECT_EQ(j["event"]["event_id"], "ev1");
  EXPECT_EQ(client_->Post("/session/login", json{{"token", "nope"}}.dump(), "application/json")->status, 401);

  j = json::parse(get("/events")->body);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["status"], "open");
  EXPECT_EQ(j[0]["discipline"], "economics");
  EXPECT_EQ(j[0]["markets"].size(), 5u);

  r = get("/event/ev1/markets");
  ASSERT_EQ(r->status, 200);
  j = json::parse(r->body);
  ASSERT_EQ(j.size(), 5u);
  EXPECT_EQ(j[0]["price_yes"], "0.500");
  EXPECT_EQ(get("/event/nope/markets")->status, 404);
}

TEST_F(HttpTest, OrderLifecycleAndFormats) {
  create_and_open("human-only");
  const std::string m = market_id_for("ev1", "r0");
  auto snap = json::parse(get("/market/" + m + "/snapshot", "tok-a")->body);
  EXPECT_EQ(snap["price_yes"], "0.500");
  EXPECT_EQ(snap["price_no"], "0.500");
  EXPECT_EQ(snap["account"]["cash"], "25.0000");
  EXPECT_EQ(snap["account"]["holdings_yes"], 0);
  EXPECT_FALSE(json::parse(get("/market/" + m + "/snapshot")->body).contains("account"));

  auto r = post("/market/" + m + "/order", {{"side", "yes"}, {"action", "buy"}}, "tok-a");
  ASSERT_EQ(r->status, 202) << r->body;
  const auto ack = json::parse(r->body);
  EXPECT_EQ(ack["status"], "queued");
  EXPECT_EQ(ack["queue_position"], 1);
  const std::string order_path = "/market/" + m + "/order/" + std::to_string(ack["seq"].get<int>());
  EXPECT_EQ(json::parse(get(order_path)->body)["status"], "queued");

  svc_->advance("ev1", 1);
  const auto res = json::parse(get(order_path)->body);
  EXPECT_EQ(res["status"], "executed");
  const std::string cost = res["trade"]["cost"];
  EXPECT_TRUE(std::regex_match(cost, kMoney)) << cost;
  const std::string price = res["trade"]["price"];
  EXPECT_TRUE(std::regex_match(price, kPrice)) << price;

  snap = json::parse(get("/market/" + m + "/snapshot", "tok-a")->body);
  EXPECT_GT(std::stod(snap["price_yes"].get<std::string>()), 0.5);
  EXPECT_EQ(snap["account"]["holdings_yes"], 1);
  EXPECT_EQ(snap["account"]["cash"], format_money(25.0 - std::stod(cost)));
  EXPECT_EQ(snap["recent_trades"].size(), 1u);
  EXPECT_EQ(snap["price_history"].size(), 2u);

  const auto trades = json::parse(get("/market/" + m + "/trades?since=0")->body);
  ASSERT_EQ(trades.size(), 1u);
  EXPECT_EQ(trades[0]["owner"], "alice");
  EXPECT_TRUE(json::parse(get("/market/" + m + "/trades?since=1")->body).empty());
  EXPECT_EQ(get("/market/" + m + "/trades?since=abc")->status, 400);

  r = post("/market/" + m + "/order", {{"side", "yes"}, {"action", "sell"}}, "tok-b");
  svc_->advance("ev1", 1);
  const auto rej = json::parse(
      get("/market/" + m + "/order/" + std::to_string(json::parse(r->body)["seq"].get<int>()))->body);
  EXPECT_EQ(rej["status"], "rejected");
  EXPECT_EQ(rej["reason"], "insufficient_holdings");
}

TEST_F(HttpTest, OrderErrorsMapToStatusCodes) {
  create_and_open();
  const std::string m = market_id_for("ev1", "r0");
  const json buy = {{"side", "yes"}, {"action", "buy"}};
  EXPECT_EQ(post("/market/" + m + "/order", buy, "bogus")->status, 401);
  EXPECT_EQ(post("/market/ev1.zz/order", buy, "tok-a")->status, 404);
  EXPECT_EQ(post("/market/" + m + "/order", {{"side", "up"}, {"action", "buy"}}, "tok-a")->status, 400);
  EXPECT_EQ(post("/market/" + m + "/order", {{"side", "yes"}}, "tok-a")->status, 400);
  EXPECT_EQ(get("/market/ev1.zz/snapshot")->status, 404);
  EXPECT_EQ(get("/market/" + m + "/order/999")->status, 404);
  post("/event/ev1/close", json::object(), "admin-secret");
  EXPECT_EQ(post("/market/" + m + "/order", buy, "tok-a")->status, 409);
  EXPECT_EQ(post("/event/ev1/close", json::object(), "admin-secret")->status, 409);
}

TEST_F(HttpTest, MoneyMarketSecrecySweep) {
  create_and_open();
  for (int t = 0; t < 5; ++t) {
    post("/market/" + market_id_for("ev1", "r1") + "/order", {{"side", "no"}, {"action", "buy"}}, "tok-a");
    svc_->advance("ev1", 1);
  }
  std::vector<std::string> reads{"/events", "/event/ev1/markets"};
  for (const auto& c : fx::event_claims()) {
    const std::string m = market_id_for("ev1", c);
    reads.push_back("/market/" + m + "/snapshot");
    reads.push_back("/market/" + m + "/trades?since=0");
  }
  for (const auto& path : reads)
    for (const std::string token : {"", "tok-a", "admin-secret"}) {
      const auto r = get(path, token);
      EXPECT_EQ(r->status, 200) << path;
      EXPECT_EQ(r->body.find("money"), std::string::npos) << path;
    }
  EXPECT_EQ(get("/event/ev1/payouts", "admin-secret")->status, 403);
  EXPECT_EQ(get("/event/ev1/export", "admin-secret")->status, 403);

  const auto closed = post("/event/ev1/close", json::object(), "admin-secret");
  ASSERT_EQ(closed->status, 200);
  const auto cj = json::parse(closed->body);
  const auto payouts = json::parse(get("/event/ev1/payouts", "admin-secret")->body);
  EXPECT_EQ(payouts["money_market"], cj["money_market"]);
  EXPECT_EQ(payouts["payouts"].size(), 3u);
  for (const auto& p : payouts["payouts"]) {
    EXPECT_EQ(p["flat_compensation"], "40.0000");
    EXPECT_TRUE(std::regex_match(p["payout"].get<std::string>(), kMoney));
  }
  EXPECT_EQ(cj["runs"].size(), 5u);
  EXPECT_TRUE(std::regex_match(cj["runs"][0]["closing_price_yes"].get<std::string>(), kPrice));
}

TEST_F(HttpTest, CloseAcceptsOutcomesAndExports) {
  create_and_open("human-only");
  const std::string m = market_id_for("ev1", "r0");
  for (int i = 0; i < 3; ++i)
    for (const auto& c : fx::event_claims())
      post("/market/" + market_id_for("ev1", c) + "/order", {{"side", "yes"}, {"action", "buy"}}, "tok-a");
  svc_->advance("ev1", 1);
  EXPECT_EQ(post("/event/ev1/close", {{"outcomes", {{"r0", "maybe"}}}}, "admin-secret")->status, 400);
  json outcomes;
  for (const auto& c : fx::event_claims()) outcomes[c] = "R";
  ASSERT_EQ(post("/event/ev1/close", {{"outcomes", outcomes}}, "admin-secret")->status, 200);
  EXPECT_EQ(json::parse(get("/events")->body)[0]["status"], "settled");
  const auto pays = json::parse(get("/event/ev1/payouts", "admin-secret")->body)["payouts"];
  const auto alice = pays[0];
  ASSERT_EQ(alice["participant_id"], "alice");
  EXPECT_TRUE(alice["eligible"].get<bool>());
  EXPECT_GT(std::stod(alice["payout"].get<std::string>()), 25.0);
  const auto ex = json::parse(get("/event/ev1/export", "admin-secret")->body);
  EXPECT_EQ(ex["runs"].size(), 5u);
  EXPECT_NE(ex["results_csv"].get<std::string>().find("ev1.r0,r0,human-only,"), std::string::npos);
}

TEST_F(HttpTest, StreamPushesTicksAndClose) {
  create_and_open("human-only");
  std::string received;
  std::thread reader([&] {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    c.Get("/event/ev1/stream", [&](const char* data, std::size_t n) {
      received.append(data, n);
      return true;
    });
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  post("/market/" + market_id_for("ev1", "r3") + "/order", {{"side", "yes"}, {"action", "buy"}}, "tok-b");
  svc_->advance("ev1", 2);
  post("/event/ev1/close", json::object(), "admin-secret");
  reader.join();
  std::vector<json> events;
  std::istringstream in(received);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("data: ", 0) == 0) events.push_back(json::parse(line.substr(6)));
  ASSERT_EQ(events.size(), 2u) << received;
  EXPECT_EQ(events[0]["type"], "tick");
  EXPECT_EQ(events[0]["market"], market_id_for("ev1", "r3"));
  EXPECT_EQ(events[0]["trades"][0]["owner"], "bob");
  EXPECT_EQ(events[1]["type"], "close");
  EXPECT_EQ(events[1]["money_market"], svc_->money_market("ev1"));
  EXPECT_NE(received.find("id: 1\n"), std::string::npos);
  EXPECT_EQ(get("/event/nope/stream")->status, 404);
}
