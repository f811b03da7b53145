#pragma once

// Scoring service core: request handlers over the CSV wire format, independent
// of any transport. http.hpp binds these to an HTTP server.

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "c3po/model_io.hpp"
#include "c3po/ranker.hpp"

namespace c3po {

struct Reply {
  int status = 200;
  std::string body;  // JSON
};

// A loaded model together with its content version. Handlers hold a
// shared_ptr for the duration of one request, so a swap never tears.
struct LoadedModel {
  ModelSnapshot model;
  std::string version;
};

inline Timestamp wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class ScoringService {
 public:
  using Clock = std::function<Timestamp()>;

  explicit ScoringService(ThrottleConfig cfg = {}, Clock clock = wall_clock_ms)
      : policies_(cfg), clock_(std::move(clock)) {}

  void set_model(ModelSnapshot m) {
    auto next = std::make_shared<const LoadedModel>(LoadedModel{m, model_version(m)});
    std::lock_guard lock(mu_);
    current_ = std::move(next);
  }

  // Loads and validates fully before swapping; on error the old model stays.
  void load(const std::string& path) { set_model(load_model(path)); }

  std::shared_ptr<const LoadedModel> current() const {
    std::lock_guard lock(mu_);
    return current_;
  }

  PolicyStore& policies() { return policies_; }

  // POST /score: one 32-field feature line.
  Reply handle_score(std::string_view body) const {
    const auto start = std::chrono::steady_clock::now();
    const auto m = current();
    if (!m) return unavailable();
    try {
      const double s = score(m->model, parse_feature_line(strip_line(body)));
      nlohmann::json j;
      j["score"] = wire_score(s);
      j["model_version"] = m->version;
      j["served_in_micros"] = micros_since(start);
      return {200, j.dump()};
    } catch (const Error& e) {
      return bad_request(e);
    }
  }

  // POST /rank: first line the user id, then "noti_type;<feature line>" per candidate.
  Reply handle_rank(std::string_view body) {
    const auto start = std::chrono::steady_clock::now();
    const auto m = current();
    if (!m) return unavailable();
    try {
      auto [user, candidates] = parse_rank_body(body);
      const Timestamp now = clock_();
      const auto decided = policies_.transact(user, [&](UserPolicy& p) {
        return throttle(score_candidates(m->model, candidates), p, now, policies_.config());
      });
      nlohmann::json list = nlohmann::json::array();
      for (const auto& d : decided) {
        list.push_back({{"noti_type", to_string(d.noti_type)},
                        {"score", wire_score(d.score)},
                        {"decision", to_string(d.decision)},
                        {"reason", to_string(d.reason)}});
      }
      nlohmann::json j;
      j["user_id"] = user;
      j["decisions"] = std::move(list);
      j["model_version"] = m->version;
      j["served_in_micros"] = micros_since(start);
      return {200, j.dump()};
    } catch (const Error& e) {
      return bad_request(e);
    }
  }

  // POST /feedback: "user_id,noti_type,outcome" with outcome clicked|ignored|cancelled.
  Reply handle_feedback(std::string_view body) {
    const auto line = strip_line(body);
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (f.size() != 3 || f[0].empty()) {
      return bad_request(Error(ErrorCode::MalformedCandidate, "expected user_id,noti_type,outcome"));
    }
    const auto type = parse_noti_type(f[1]);
    if (!type) return bad_request(Error(ErrorCode::UnknownNotiType, "unknown noti_type '" + std::string(f[1]) + "'"));
    const auto outcome = parse_outcome(f[2]);
    if (!outcome) return bad_request(Error(ErrorCode::MalformedCandidate, "unknown outcome '" + std::string(f[2]) + "'"));
    const Timestamp now = clock_();
    const auto state = policies_.transact(std::string(f[0]), [&](UserPolicy& p) {
      record_feedback(p, *type, *outcome, now, policies_.config());
      return p.at(*type);
    });
    nlohmann::json j;
    j["user_id"] = f[0];
    j["noti_type"] = to_string(*type);
    j["score_threshold"] = state.score_threshold;
    return {200, j.dump()};
  }

  // POST /admin/reload: body is a model path.
  Reply handle_reload(std::string_view body) {
    const std::string path(strip_line(body));
    try {
      load(path);
    } catch (const Error& e) {
      const auto m = current();
      nlohmann::json j;
      j["error"] = to_string(e.code());
      j["detail"] = e.detail();
      j["model_version"] = m ? nlohmann::json(m->version) : nlohmann::json(nullptr);
      return {e.code() == ErrorCode::IoError ? 404 : 422, j.dump()};
    }
    nlohmann::json j;
    j["reloaded"] = path;
    j["model_version"] = current()->version;
    return {200, j.dump()};
  }

  // GET /healthz
  Reply healthz() const {
    const auto m = current();
    nlohmann::json j;
    j["status"] = m ? "ready" : "unready";
    if (m) j["model_version"] = m->version;
    return {m ? 200 : 503, j.dump()};
  }

  // Shortest round-trip text of the score rounded to 6 decimals, kept
  // strictly inside (0, 1).
  static double wire_score(double s) {
    const double r = std::round(s * 1e6) / 1e6;
    return std::clamp(r, 1e-6, 1 - 1e-6);
  }

  static std::pair<UserId, std::vector<Candidate>> parse_rank_body(std::string_view body) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < body.size()) {
      auto nl = body.find('\n', start);
      if (nl == std::string_view::npos) nl = body.size();
      auto line = strip_line(body.substr(start, nl - start));
      if (!line.empty()) lines.push_back(line);
      start = nl + 1;
    }
    if (lines.empty() || lines[0].find(';') != std::string_view::npos || lines[0].find(',') != std::string_view::npos) {
      throw Error(ErrorCode::MissingUserId, "first line must be the user id");
    }
    if (lines.size() < 2) throw Error(ErrorCode::MalformedCandidate, "no candidates");
    std::vector<Candidate> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto semi = lines[i].find(';');
      if (semi == std::string_view::npos) {
        throw Error(ErrorCode::MalformedCandidate, "candidate " + std::to_string(i) + " lacks 'noti_type;'");
      }
      const auto type = parse_noti_type(lines[i].substr(0, semi));
      if (!type) {
        throw Error(ErrorCode::UnknownNotiType, "candidate " + std::to_string(i) + ": '" +
                                                    std::string(lines[i].substr(0, semi)) + "'");
      }
      for (const auto& c : out) {
        if (c.noti_type == *type) throw Error(ErrorCode::MalformedCandidate, "duplicate " + to_string(*type));
      }
      out.push_back({*type, parse_feature_line(lines[i].substr(semi + 1))});
    }
    return {UserId(lines[0]), std::move(out)};
  }

 private:
  static std::string_view strip_line(std::string_view s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
  }

  static std::int64_t micros_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count();
  }

  static Reply bad_request(const Error& e) {
    nlohmann::json j;
    j["error"] = to_string(e.code());
    j["detail"] = e.detail();
    if (const auto* fe = dynamic_cast<const FieldError*>(&e)) j["field"] = fe->index();
    return {400, j.dump()};
  }

  static Reply unavailable() {
    nlohmann::json j;
    j["error"] = to_string(ErrorCode::NoModelLoaded);
    j["detail"] = "no model loaded";
    return {503, j.dump()};
  }

  mutable std::mutex mu_;
  std::shared_ptr<const LoadedModel> current_;
  PolicyStore policies_;
  Clock clock_;
};

}  // namespace c3po
