/*
 * Copyright 2026 The phonconv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fixtures.hpp"

#include <phonconv/server.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <thread>

using namespace phonconv;
using namespace phonconv::testing;

namespace {

class RunningServer {
 public:
  RunningServer() : sessions_(std::make_shared<SessionManager>()) {
    sessions_->add_domain(read_file(data_path("demo_domain.xml")));
    sessions_->add_config(read_file(data_path("features.json")), PHONCONV_DATA_DIR);
    server_ = std::make_unique<HttpServer>(sessions_);
    port_ = server_->bind_any();
    thread_ = std::thread([this] { server_->run(); });
    server_->http().wait_until_ready();
  }

  ~RunningServer() {
    server_->stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(5, 0);
    return c;
  }

  std::string new_session() {
    auto c = client();
    auto res = c.Post("/api/sessions", R"({"domain_id":"demo","feature_config_id":"shadowing-features"})",
                      "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    return json::parse(res->body).at("session_id").get<std::string>();
  }

  int port() const { return port_; }

 private:
  std::shared_ptr<SessionManager> sessions_;
  std::unique_ptr<HttpServer> server_;
  std::thread thread_;
  int port_ = -1;
};

std::string record_body(Values ae) {
  UtteranceRecord rec;
  rec.transcript = "ja";
  rec.segments = {{"E:", 0, 100, {{"ae", std::move(ae)}}}};
  return json{{"record", json::parse(serialize_record(rec))}}.dump();
}

std::vector<std::uint64_t> sse_ids(const std::string& body) {
  std::vector<std::uint64_t> ids;
  std::size_t pos = 0;
  while ((pos = body.find("id: ", pos)) != std::string::npos) {
    pos += 4;
    ids.push_back(std::stoull(body.substr(pos, body.find('\n', pos) - pos)));
  }
  return ids;
}

}  // namespace

TEST_CASE("session endpoints", "[server]") {
  RunningServer srv;
  REQUIRE(srv.port() > 0);
  auto c = srv.client();
  const auto id = srv.new_session();

  auto res = c.Post(("/api/sessions/" + id + "/turns").c_str(), R"({"text":"yes"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto turn = json::parse(res->body);
  CHECK(turn["speaker"] == "user");
  CHECK(turn["response"]["speaker"] == "system");
  CHECK(turn["response"]["transcript"].get<std::string>().find("Gerät") != std::string::npos);

  res = c.Post(("/api/sessions/" + id + "/turns").c_str(), record_body({420, 2150}), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  turn = json::parse(res->body);
  CHECK(turn["detected"].size() == 1);
  CHECK(turn["predictions"]["ae"]["label"] == "[e:]");

  res = c.Get(("/api/sessions/" + id).c_str());
  REQUIRE(res);
  const auto summary = json::parse(res->body);
  CHECK(summary["turn_count"] == 4);
  CHECK(summary["features"]["ae"]["update_count"] == 1);

  res = c.Get(("/api/sessions/" + id + "/archive").c_str());
  REQUIRE(res);
  CHECK(replay_session(json::parse(res->body)).identical);

  res = c.Get("/api/features");
  REQUIRE(res);
  const auto features = json::parse(res->body);
  REQUIRE(features.size() == 1);
  CHECK(features[0]["feature_config_id"] == "shadowing-features");
  CHECK(features[0]["features"].size() == 3);
}

TEST_CASE("error responses", "[server]") {
  RunningServer srv;
  auto c = srv.client();
  auto res = c.Post("/api/sessions", R"({"domain_id":"nope","feature_config_id":"shadowing-features"})",
                    "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(json::parse(res->body)["error"] == "UnknownDomain");

  res = c.Post("/api/sessions/zzz/turns", R"({"text":"hi"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(json::parse(res->body)["error"] == "UnknownSession");

  const auto id = srv.new_session();
  res = c.Post(("/api/sessions/" + id + "/turns").c_str(), "{oops", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"] == "ParseError");

  res = c.Post(("/api/sessions/" + id + "/turns").c_str(), record_body({420}), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"] == "ValidationError");

  res = c.Post(("/api/sessions/" + id + "/turns").c_str(), R"({"text":"bye"})", "application/json");
  REQUIRE(res);
  res = c.Post(("/api/sessions/" + id + "/turns").c_str(), R"({"text":"hello"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["error"] == "TerminalSession");
}

TEST_CASE("event stream", "[server]") {
  RunningServer srv;
  auto c = srv.client();
  const auto id = srv.new_session();
  const std::string turns = "/api/sessions/" + id + "/turns";
  c.Post(turns.c_str(), R"({"text":"yes"})", "application/json");
  c.Post(turns.c_str(), record_body({420, 2150}), "application/json");

  auto res = c.Get(("/api/sessions/" + id + "/events?from=0&follow=0").c_str());
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type").rfind("text/event-stream", 0) == 0);
  const auto all = sse_ids(res->body);
  REQUIRE(!all.empty());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(res->body.find("event: exemplar_accepted") != std::string::npos);

  SECTION("reconnect resumes after the last id") {
    const auto last = all.size() / 2;
    res = c.Get(("/api/sessions/" + id + "/events?from=" + std::to_string(last + 1) + "&follow=0").c_str());
    REQUIRE(res);
    const auto rest = sse_ids(res->body);
    REQUIRE(!rest.empty());
    CHECK(rest.front() == last + 1);
    CHECK(rest.back() == all.back());
  }

  SECTION("live subscribers receive new events") {
    const std::size_t backlog = all.size();
    std::vector<std::string> bodies(2);
    std::vector<std::thread> subscribers;
    for (int k = 0; k < 2; ++k) {
      subscribers.emplace_back([&, k] {
        auto sc = srv.client();
        sc.Get(("/api/sessions/" + id + "/events?from=0").c_str(), [&, k](const char* data, std::size_t n) {
          bodies[k].append(data, n);
          return sse_ids(bodies[k]).size() < backlog + 3;
        });
      });
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    c.Post(turns.c_str(), record_body({430, 2100}), "application/json");
    for (auto& t : subscribers) t.join();
    for (const auto& body : bodies) {
      const auto ids = sse_ids(body);
      REQUIRE(ids.size() >= backlog + 3);
      for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i] == i);
    }
  }
}

TEST_CASE("replay-source upload", "[server]") {
  RunningServer srv;
  auto c = srv.client();
  const auto id = srv.new_session();
  UtteranceRecord a, b;
  a.transcript = "ja";
  a.segments = {{"E:", 0, 100, {{"ae", {420, 2150}}}}};
  b.transcript = "mehr";
  b.segments = {{"E:", 0, 100, {{"ae", {430, 2120}}}}};
  const std::string stream = serialize_record(a) + "\n" + serialize_record(b) + "\n";

  httplib::MultipartFormDataItems items{{"file", stream, "turns.jsonl", "application/x-ndjson"}};
  auto res = c.Post(("/api/sessions/" + id + "/replay-source").c_str(), items);
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto turns = json::parse(res->body);
  REQUIRE(turns.size() == 2);
  CHECK(turns[1]["transcript"] == "mehr");

  SECTION("a bad line leaves the session untouched") {
    const auto before = json::parse(c.Get(("/api/sessions/" + id).c_str())->body)["event_count"];
    httplib::MultipartFormDataItems bad{{"file", serialize_record(a) + "\n{bad\n", "t.jsonl", "application/x-ndjson"}};
    res = c.Post(("/api/sessions/" + id + "/replay-source").c_str(), bad);
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(c.Get(("/api/sessions/" + id).c_str())->body)["event_count"] == before);
  }

  SECTION("missing field") {
    httplib::MultipartFormDataItems none{{"other", "x", "", "text/plain"}};
    res = c.Post(("/api/sessions/" + id + "/replay-source").c_str(), none);
    REQUIRE(res);
    CHECK(res->status == 400);
  }
}
