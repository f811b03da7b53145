#pragma once

// HTTP/1.1 binding of ScoringService.

#include <charconv>
#include <string>

#include <httplib.h>

#include "c3po/service.hpp"

namespace c3po {

struct ListenAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

// "host:port" or ":port" or "port".
inline ListenAddress parse_listen(std::string_view s) {
  ListenAddress a;
  const auto colon = s.rfind(':');
  std::string_view port = s;
  if (colon != std::string_view::npos) {
    if (colon > 0) a.host = std::string(s.substr(0, colon));
    port = s.substr(colon + 1);
  }
  int p = 0;
  const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
  if (ec != std::errc() || ptr != port.data() + port.size() || p < 0 || p > 65535) {
    throw Error(ErrorCode::InvalidConfig, "bad listen address '" + std::string(s) + "'");
  }
  a.port = p;
  return a;
}

// Routes plus TCP_NODELAY: with keep-alive, Nagle's algorithm and delayed
// ACKs otherwise add tens of milliseconds to every small response.
inline void bind_service(httplib::Server& srv, ScoringService& svc) {
  srv.set_tcp_nodelay(true);
  auto send = [](httplib::Response& res, const Reply& r) { res.set_content(r.body, "application/json"); res.status = r.status; };
  srv.Post("/score", [&svc, send](const httplib::Request& req, httplib::Response& res) { send(res, svc.handle_score(req.body)); });
  srv.Post("/rank", [&svc, send](const httplib::Request& req, httplib::Response& res) { send(res, svc.handle_rank(req.body)); });
  srv.Post("/feedback",
           [&svc, send](const httplib::Request& req, httplib::Response& res) { send(res, svc.handle_feedback(req.body)); });
  srv.Post("/admin/reload",
           [&svc, send](const httplib::Request& req, httplib::Response& res) { send(res, svc.handle_reload(req.body)); });
  srv.Get("/healthz", [&svc, send](const httplib::Request&, httplib::Response& res) { send(res, svc.healthz()); });
}

}  // namespace c3po
