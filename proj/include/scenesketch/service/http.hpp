#pragma once

// JSON-over-HTTP binding of the session store.
//
//   POST /sessions                      {"description"}
//   GET  /sessions/{id}
//   GET  /sessions/{id}/candidates?k=4
//   POST /sessions/{id}/autocomplete    {"box": {"class", "x", "y", "w", "h"}, "k"}
//   POST /sessions/{id}/select          {"candidate"}
//   POST /sessions/{id}/resketch        {"object"}
//   GET  /sessions/{id}/render          SVG; ?format=json for {"svg", "scene"}
//   GET  /sessions/{id}/replay          SVG rebuilt from the history alone
//
// Every JSON body carries "schema_version"; every response also sets the
// X-Schema-Version header. A request id ("request_id" in the body or the
// X-Request-Id header) makes a mutation safe to retry.

#include "httplib.h"
#include "scenesketch/service/session.hpp"

namespace scenesketch {

namespace detail {

inline void send(httplib::Response& res, const SessionStore::Response& r) {
  res.status = r.status;
  res.set_header("X-Schema-Version", std::to_string(kSchemaVersion));
  res.set_content(r.body, r.content_type);
}

inline Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ApiError(400, "request body must be a JSON object");
  if (j.contains("schema_version") && j.at("schema_version") != kSchemaVersion)
    throw ApiError(400, "unsupported schema_version");
  return j;
}

inline std::string request_id(const httplib::Request& req, const Json& body) {
  if (body.contains("request_id")) return body.at("request_id").get<std::string>();
  return req.get_header_value("X-Request-Id");
}

template <class T>
T field(const Json& body, const char* name) {
  if (!body.contains(name)) throw ApiError(400, std::string("missing field '") + name + "'");
  try {
    return body.at(name).get<T>();
  } catch (const Json::exception&) {
    throw ApiError(400, std::string("field '") + name + "' has the wrong type");
  }
}

/// Parses the body, then runs `op` on the session; malformed bodies answer 400.
template <class Op>
void session_route(SessionStore& store, const httplib::Request& req, httplib::Response& res,
                   bool mutates, Op&& op) {
  Json body;
  try {
    body = parse_body(req);
  } catch (const ApiError& e) {
    send(res, SessionStore::error_response(e.status(), e.what()));
    return;
  }
  const std::string id = req.path_params.at("id");
  send(res, store.with_session(id, request_id(req, body), mutates,
                               [&](SessionState& s) { return op(s, body); }));
}

}  // namespace detail

inline void install_routes(httplib::Server& server, SessionStore& store) {
  using Req = const httplib::Request&;
  using Res = httplib::Response&;
  const SessionEngine& eng = store.engine();

  server.Post("/sessions", [&store](Req req, Res res) {
    try {
      const Json body = detail::parse_body(req);
      detail::send(res, store.create(detail::field<std::string>(body, "description"),
                                     detail::request_id(req, body)));
    } catch (const ApiError& e) {
      detail::send(res, SessionStore::error_response(e.status(), e.what()));
    }
  });

  server.Get("/sessions/:id", [&store](Req req, Res res) {
    detail::session_route(store, req, res, false, [](SessionState& s, const Json&) {
      return SessionStore::json_response(SessionEngine::state_json(s));
    });
  });

  server.Get("/sessions/:id/candidates", [&store, &eng](Req req, Res res) {
    detail::session_route(store, req, res, true, [&](SessionState& s, const Json&) {
      std::size_t k = 4;
      if (req.has_param("k")) {
        try {
          k = std::stoul(req.get_param_value("k"));
        } catch (const std::exception&) {
          throw ApiError(400, "k must be a positive integer");
        }
      }
      return SessionStore::json_response(eng.candidates_json(eng.candidates(s, k)));
    });
  });

  server.Post("/sessions/:id/autocomplete", [&store, &eng](Req req, Res res) {
    detail::session_route(store, req, res, true, [&](SessionState& s, const Json& body) {
      const std::size_t k = body.contains("k") ? detail::field<std::size_t>(body, "k") : 4;
      return SessionStore::json_response(
          eng.candidates_json(eng.autocomplete(s, detail::field<Json>(body, "box"), k)));
    });
  });

  server.Post("/sessions/:id/select", [&store, &eng](Req req, Res res) {
    detail::session_route(store, req, res, true, [&](SessionState& s, const Json& body) {
      eng.select(s, detail::field<std::string>(body, "candidate"));
      return SessionStore::json_response(SessionEngine::state_json(s));
    });
  });

  server.Post("/sessions/:id/resketch", [&store, &eng](Req req, Res res) {
    detail::session_route(store, req, res, true, [&](SessionState& s, const Json& body) {
      eng.resketch(s, detail::field<std::size_t>(body, "object"));
      return SessionStore::json_response(SessionEngine::state_json(s));
    });
  });

  server.Get("/sessions/:id/render", [&store, &eng](Req req, Res res) {
    detail::session_route(store, req, res, false, [&](SessionState& s, const Json&) {
      const SceneSketch scene = eng.scene(s);
      const std::string svg = render_svg(scene);
      if (req.get_param_value("format") == "json")
        return SessionStore::json_response({{"svg", svg}, {"scene", scene_polylines_json(scene)}});
      return SessionStore::Response{200, svg, "image/svg+xml"};
    });
  });

  server.Get("/sessions/:id/replay", [&store, &eng](Req req, Res res) {
    detail::session_route(store, req, res, false, [&](SessionState& s, const Json&) {
      const SessionState copy = eng.replay(s.id, s.history);
      return SessionStore::Response{200, render_svg(eng.scene(copy)), "image/svg+xml"};
    });
  });

  server.set_exception_handler([](Req, Res res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    detail::send(res, SessionStore::error_response(500, what));
  });
}

/// "host:port" from SCENESKETCH_BIND, default 127.0.0.1:8080.
inline std::pair<std::string, int> bind_address_from_env() {
  const char* v = std::getenv("SCENESKETCH_BIND");
  std::string s = v && *v ? v : "127.0.0.1:8080";
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("SCENESKETCH_BIND must be host:port");
  return {s.substr(0, colon), std::stoi(s.substr(colon + 1))};
}

}  // namespace scenesketch
