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

/** @file server.hpp HTTP front end for dialogue sessions.
 *
 *     POST /api/sessions                      {domain_id, feature_config_id} -> {session_id}
 *     POST /api/sessions/{id}/turns           {text} | {record}              -> Turn
 *     GET  /api/sessions/{id}                                                -> summary
 *     GET  /api/sessions/{id}/events?from=N                                  -> text/event-stream
 *     GET  /api/features                                                     -> definitions
 *     POST /api/sessions/{id}/replay-source   multipart, field "file"        -> [Turn]
 *     GET  /api/sessions/{id}/archive                                        -> archive
 *
 * The event stream first replays every event with seq >= from, then
 * follows live events. `follow=0` closes the stream after the backlog.
 * Errors are {"error": <kind>, "message": <text>}.
 */

#pragma once

#include <phonconv/error.hpp>
#include <phonconv/feature_config.hpp>
#include <phonconv/session.hpp>
#include <phonconv/speech_adapter.hpp>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

namespace phonconv {

inline int http_status(Errc code) {
  switch (code) {
    case Errc::unknown_domain:
    case Errc::unknown_config:
    case Errc::unknown_session:
    case Errc::unknown_feature:
    case Errc::unknown_state: return 404;
    case Errc::terminal_session:
    case Errc::terminal_state: return 409;
    case Errc::parse_error:
    case Errc::validation_error:
    case Errc::dimension_mismatch: return 400;
    default: return 500;
  }
}

/// One SSE frame; the event's seq doubles as the SSE id.
inline std::string sse_frame(const SessionEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + to_string(e.kind) + "\ndata: " + to_json(e).dump() + "\n\n";
}

class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<SessionManager> sessions) : sessions_(std::move(sessions)) { routes(); }

  ~HttpServer() { stop(); }

  httplib::Server& http() noexcept { return http_; }

  bool mount_static(const std::string& dir) { return http_.set_mount_point("/", dir); }

  /// Binds to an ephemeral port and returns it (or -1).
  int bind_any(const std::string& host = "127.0.0.1") { return http_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return http_.bind_to_port(host, port); }
  /// Blocks until stop().
  bool run() { return http_.listen_after_bind(); }

  void stop() {
    stopping_ = true;
    http_.stop();
  }

 private:
  template <typename Handler>
  static void guarded(httplib::Response& res, Handler&& handler) {
    try {
      handler();
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), std::string(to_string(e.code())), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "ParseError", e.what());
    } catch (const std::logic_error& e) {
      send_error(res, 400, "ParseError", e.what());
    }
  }

  static void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", kind}, {"message", message}}.dump(), "application/json");
  }

  static void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static json turn_pair(const PostResult& r) {
    json j = to_json(r.user_turn);
    j["response"] = to_json(r.system_turn);
    return j;
  }

  void routes() {
    http_.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        const auto id = sessions_->create_session(body.at("domain_id").get<std::string>(),
                                                  body.at("feature_config_id").get<std::string>());
        send_json(res, json{{"session_id", id}}, 201);
      });
    });

    http_.Post("/api/sessions/:id/turns", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto session = sessions_->get(req.path_params.at("id"));
        const auto defs = session->resources().definitions();
        const auto input = user_input_from_json(nlohmann::json::parse(req.body), defs);
        send_json(res, turn_pair(session->post_turn(input)));
      });
    });

    http_.Get("/api/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, sessions_->get(req.path_params.at("id"))->summary()); });
    });

    http_.Get("/api/sessions/:id/archive", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, sessions_->get(req.path_params.at("id"))->archive()); });
    });

    http_.Get("/api/features", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        json out = json::array();
        for (const auto& cfg : sessions_->configs()) {
          json features = json::array();
          for (const auto& f : cfg.features) {
            json def = to_json(f.definition);
            def["classifier"] = to_string(f.classifier);
            features.push_back(std::move(def));
          }
          out.push_back({{"feature_config_id", cfg.id}, {"features", std::move(features)}});
        }
        send_json(res, out);
      });
    });

    http_.Post("/api/sessions/:id/replay-source", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto session = sessions_->get(req.path_params.at("id"));
        if (!req.has_file("file")) throw Error(Errc::parse_error, "multipart field 'file' is required");
        // Parse the whole upload first so a bad line leaves the session untouched.
        std::istringstream in(req.get_file_value("file").content);
        const auto records = read_utterance_stream(in, session->resources().definitions());
        json turns = json::array();
        for (const auto& rec : records) {
          if (session->terminal()) break;
          turns.push_back(turn_pair(session->post_turn(UserInput::from_record(rec))));
        }
        send_json(res, turns);
      });
    });

    http_.Get("/api/sessions/:id/events", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto session = sessions_->get(req.path_params.at("id"));
        auto next = std::make_shared<std::uint64_t>(req.has_param("from") ? std::stoull(req.get_param_value("from")) : 0);
        const bool follow = !req.has_param("follow") || req.get_param_value("follow") != "0";
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, session, next, follow](std::size_t, httplib::DataSink& sink) {
              if (stopping_) return false;
              const auto events = follow ? session->wait_events(*next, std::chrono::milliseconds(200))
                                         : session->events_since(*next);
              for (const auto& e : events) {
                const std::string frame = sse_frame(e);
                if (!sink.write(frame.data(), frame.size())) return false;
                *next = e.seq + 1;
              }
              if (!follow) {
                sink.done();
                return true;
              }
              // Comment frame keeps idle connections alive and detects hangups.
              if (events.empty() && !sink.write(":\n\n", 3)) return false;
              return true;
            });
      });
    });
  }

  std::shared_ptr<SessionManager> sessions_;
  httplib::Server http_;
  std::atomic<bool> stopping_{false};
};

}  // namespace phonconv
