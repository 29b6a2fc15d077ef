#pragma once

#include <string>

#include <httplib.h>

#include "trustbench/session_service.hpp"

namespace trustbench::service {

inline constexpr const char* json_content_type = "application/json";

/// Routes the session store under /v1. Bodies are JSON both ways; errors
/// carry {"error", "field"?} with the status from `service_error`.
inline void mount(httplib::Server& server, session_store& store) {
  auto respond = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), json_content_type);
  };
  auto guarded = [respond](auto handler) {
    return [respond, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const service_error& e) {
        respond(res, e.status(), e.body());
      } catch (const json::exception& e) {
        respond(res, 400, json{{"error", std::string("malformed JSON: ") + e.what()}});
      } catch (const trustbench::error& e) {
        json body{{"error", e.what()}};
        if (!e.field().empty()) body["field"] = e.field();
        respond(res, 400, body);
      } catch (const std::exception& e) {
        respond(res, 500, json{{"error", e.what()}});
      }
    };
  };

  server.Post("/v1/sessions", guarded([&store, respond](const httplib::Request& req,
                                                        httplib::Response& res) {
    const std::string id = store.create_session(json::parse(req.body));
    respond(res, 201, json{{"session_id", id}});
  }));
  server.Get(R"(/v1/sessions/([^/]+)/next)",
             guarded([&store, respond](const httplib::Request& req, httplib::Response& res) {
               respond(res, 200, store.next_item(req.matches[1]));
             }));
  server.Post(R"(/v1/sessions/([^/]+)/responses)",
              guarded([&store, respond](const httplib::Request& req, httplib::Response& res) {
                respond(res, 200, store.submit_response(req.matches[1], json::parse(req.body)));
              }));
  server.Get(R"(/v1/sessions/([^/]+)/results)",
             guarded([&store, respond](const httplib::Request& req, httplib::Response& res) {
               respond(res, 200, store.session_results(req.matches[1]));
             }));
}

}  // namespace trustbench::service
