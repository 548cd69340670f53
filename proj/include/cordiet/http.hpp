#pragma once

// HTTP binding of the session store. Request and response bodies are JSON
// except artifact/document fetches, which return the requested format.

#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cordiet/error.hpp"
#include "cordiet/service.hpp"

namespace cordiet {

inline int http_status(const Error& e) {
  std::string k = e.kind();
  if (k == "not_found") return 404;
  if (k == "ordering") return 409;
  if (k == "resource") return 413;
  if (k == "internal") return 500;
  return 400;
}

namespace detail {

inline void send_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(2), "application/json");
}

inline const char* content_type(std::string_view format) {
  if (format == "xml") return "application/xml";
  if (format == "dot") return "text/vnd.graphviz";
  return "application/json";
}

inline json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body: ") + e.what());
  }
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_json(res, {{"error", e.kind()}, {"message", e.what()}}, http_status(e));
    } catch (const json::exception& e) {
      send_json(res, {{"error", "parse"}, {"message", e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", "internal"}, {"message", e.what()}}, 500);
    }
  };
}

inline json session_summary(const Session& s) {
  auto arts = json::array();
  for (const auto& name : s.artifact_order) {
    const auto& a = s.artifacts.at(name);
    arts.push_back({{"name", name}, {"kind", a.kind}, {"profileHash", a.profile_hash}, {"inputs", a.inputs},
                    {"warnings", a.warnings}});
  }
  auto j = session_to_json(s);
  return {{"id", s.id},
          {"language", language_code(s.language)},
          {"documents", s.corpus.size()},
          {"indexTerms", s.index.postings().size()},
          {"ontologyVersion", s.ontology_version()},
          {"artifacts", arts},
          {"profiles", j["profiles"]},
          {"audit", j["audit"]}};
}

}  // namespace detail

inline void register_routes(httplib::Server& server, SessionStore& store) {
  using detail::guarded;
  using detail::send_json;
  using Req = httplib::Request;
  using Res = httplib::Response;

  server.Post("/sessions", guarded([&](const Req& req, Res& res) {
    auto body = detail::parse_body(req);
    std::optional<Language> lang;
    if (body.contains("language")) lang = parse_language(body["language"].get<std::string>());
    auto id = store.create(body.at("corpus").get<std::string>(), body.at("ontology").get<std::string>(), lang);
    send_json(res, store.read(id, [](const Session& s) { return detail::session_summary(s); }), 201);
  }));
  server.Get("/sessions", guarded([&](const Req&, Res& res) { send_json(res, store.ids()); }));
  server.Get(R"(/sessions/([^/]+))", guarded([&](const Req& req, Res& res) {
    send_json(res, store.read(req.matches[1], [](const Session& s) { return detail::session_summary(s); }));
  }));
  server.Post(R"(/sessions/([^/]+)/phases)", guarded([&](const Req& req, Res& res) {
    auto profile = profile_from_json(detail::parse_body(req));
    auto name = store.run_phase(req.matches[1], profile);
    auto kind = store.read(req.matches[1], [&](const Session& s) { return s.artifact(name).kind; });
    send_json(res, {{"artifact", name}, {"kind", kind}}, 201);
  }));
  server.Get(R"(/sessions/([^/]+)/artifacts)", guarded([&](const Req& req, Res& res) {
    send_json(res, store.read(req.matches[1], [](const Session& s) { return detail::session_summary(s)["artifacts"]; }));
  }));
  server.Get(R"(/sessions/([^/]+)/artifacts/([^/]+))", guarded([&](const Req& req, Res& res) {
    std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
    std::string name = req.matches[2];
    auto bytes = store.read(req.matches[1], [&](const Session& s) { return get_artifact(s, name, format); });
    res.set_content(bytes, detail::content_type(format == "checkpoint" ? "json" : format));
  }));
  server.Get(R"(/sessions/([^/]+)/documents/(.+))", guarded([&](const Req& req, Res& res) {
    std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
    std::string id = httplib::detail::decode_url(req.matches[2], false);
    auto bytes = store.read(req.matches[1], [&](const Session& s) { return get_document(s, id, format); });
    res.set_content(bytes, detail::content_type(format));
  }));
  server.Get(R"(/sessions/([^/]+)/resolve)", guarded([&](const Req& req, Res& res) {
    if (!req.has_param("url")) throw ConfigError("missing url parameter");
    auto url = req.get_param_value("url");
    auto bytes = store.read(req.matches[1], [&](const Session& s) { return get_document(s, resolve_url(s, url)); });
    res.set_content(bytes, "application/json");
  }));
  server.Get(R"(/sessions/([^/]+)/profiles)", guarded([&](const Req& req, Res& res) {
    send_json(res, store.read(req.matches[1], [](const Session& s) { return session_to_json(s)["profiles"]; }));
  }));
  server.Put(R"(/sessions/([^/]+)/profiles/([^/]+))", guarded([&](const Req& req, Res& res) {
    auto profile = profile_from_json(detail::parse_body(req));
    std::string name = req.matches[2];
    store.write(req.matches[1], [&](Session& s) { s.profiles[name] = profile; });
    send_json(res, {{"profile", name}});
  }));
  server.Delete(R"(/sessions/([^/]+)/profiles/([^/]+))", guarded([&](const Req& req, Res& res) {
    std::string name = req.matches[2];
    store.write(req.matches[1], [&](Session& s) {
      if (!s.profiles.erase(name)) throw NotFoundError("unknown profile: " + name);
    });
    send_json(res, {{"deleted", name}});
  }));
  server.Post(R"(/sessions/([^/]+)/profiles/([^/]+)/run)", guarded([&](const Req& req, Res& res) {
    auto name = store.run_profile(req.matches[1], req.matches[2]);
    send_json(res, {{"artifact", name}}, 201);
  }));
  server.Put(R"(/sessions/([^/]+)/ontology)", guarded([&](const Req& req, Res& res) {
    auto version = store.write(req.matches[1], [&](Session& s) {
      replace_ontology(s, req.body);
      return s.ontology_version();
    });
    send_json(res, {{"ontologyVersion", version}});
  }));
}

}  // namespace cordiet
