// Copyright 2026 The stopburst Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <functional>

#include "httplib.h"
#include "stopburst/error.hpp"
#include "stopburst/service.hpp"

namespace stopburst::service {
namespace {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

void send_json(httplib::Response& res, const nlohmann::ordered_json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  send_json(res, {{"error", kind}, {"message", message}}, status);
}

// Maps the library's error kinds onto HTTP statuses.
Handler guarded(Handler h) {
  return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      h(req, res);
    } catch (const NotFound& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const Conflict& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, "validation", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "parse", e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

nlohmann::json body_json(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body);
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

}  // namespace

struct HttpServer::Impl {
  AnnotationService& service;
  httplib::Server server;
  std::atomic<bool> bound{false};

  explicit Impl(AnnotationService& s) : service(s) {}
};

HttpServer::HttpServer(AnnotationService& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  auto& svc = impl_->service;

  svr.Get("/v1/health", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, {{"status", "ok"}});
          }));

  svr.Post("/v1/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             auto j = body_json(req);
             auto strategy = parse_strategy(j.value("strategy", "sequential"));
             auto seed = j.value("seed", std::uint64_t{0});
             std::optional<std::string> id;
             if (j.contains("session_id") && !j["session_id"].is_null()) id = j["session_id"].get<std::string>();
             auto sid = svc.open_session(strategy, seed, j.value("annotator", ""), id);
             send_json(res, {{"session_id", sid}, {"strategy", to_string(strategy)}, {"seed", seed}}, 201);
           }));

  svr.Get(R"(/v1/sessions/([^/]+)/next)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            std::optional<QueueStrategy> strategy;
            if (req.has_param("strategy")) strategy = parse_strategy(req.get_param_value("strategy"));
            auto r = svc.next_token(req.matches[1], strategy);
            nlohmann::ordered_json j;
            j["status"] = r.empty ? "empty" : "ok";
            j["token"] = r.token ? *r.token : nlohmann::ordered_json(nullptr);
            send_json(res, j);
          }));

  svr.Post(R"(/v1/sessions/([^/]+)/labels)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             auto j = body_json(req);
             if (!j.contains("token_id") || !j.contains("label")) {
               throw ValidationError("label submission needs token_id and label");
             }
             auto token_id = j["token_id"].get<std::string>();
             auto label = parse_label(j["label"].get<std::string>());
             auto r = svc.submit_label(req.matches[1], token_id, label, j.value("annotator", ""));
             nlohmann::ordered_json out;
             out["status"] = "ok";
             out["token_id"] = token_id;
             out["label"] = to_string(label);
             out["changed"] = r.changed;
             out["previous"] = r.previous ? nlohmann::ordered_json(to_string(*r.previous)) : nullptr;
             out["audit_seq"] = r.audit_seq ? nlohmann::ordered_json(*r.audit_seq) : nullptr;
             send_json(res, out);
           }));

  svr.Get(R"(/v1/sessions/([^/]+)/progress)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, svc.progress(req.matches[1]));
          }));

  svr.Get(R"(/v1/tokens/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, svc.descriptor(req.matches[1]));
          }));

  svr.Get(R"(/v1/tokens/([^/]+)/audio)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            auto wav = svc.audio_wav(req.matches[1]);
            res.set_content(std::string(wav.begin(), wav.end()), "audio/wav");
          }));

  svr.Get(R"(/v1/tokens/([^/]+)/spectrogram)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, to_json(svc.spectrogram(req.matches[1])));
          }));

  svr.Get("/v1/audit", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            send_json(res, svc.audit());
          }));

  svr.Get("/v1/audit/log", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            nlohmann::ordered_json arr = nlohmann::ordered_json::array();
            for (const auto& e : svc.audit_log()) arr.push_back(to_json(e));
            send_json(res, arr);
          }));

  svr.Post("/v1/flush", guarded([&svc](const httplib::Request&, httplib::Response& res) {
             svc.flush();
             send_json(res, {{"status", "ok"}});
           }));

  if (static_dir) {
    if (!std::filesystem::is_directory(*static_dir)) {
      throw NotFound("static directory " + static_dir->string() + " does not exist");
    }
    svr.set_mount_point("/", static_dir->string());
  }
  // Unmatched /v1 routes answer in JSON like every other API error.
  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (req.path.rfind("/v1/", 0) == 0 && res.body.empty()) {
      send_error(res, res.status, res.status == 404 ? "not_found" : "error", "no route for " + req.path);
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = -1;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    bound = port;
  }
  if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound;
}

void HttpServer::listen() {
  if (!impl_->bound) throw Error("listen() before bind()");
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace stopburst::service
