#pragma once

// Ranking, throttling and feedback adaptation of candidate pop-ups.

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "c3po/dataset.hpp"
#include "c3po/error.hpp"
#include "c3po/featurizer.hpp"
#include "c3po/mlp.hpp"

namespace c3po {

enum class Decision { Show, Suppress };
enum class SuppressReason { None, BelowThreshold, CapReached, Outranked };

inline std::string_view to_string(Decision d) { return d == Decision::Show ? "Show" : "Suppress"; }

inline std::string_view to_string(SuppressReason r) {
  switch (r) {
    case SuppressReason::None: return "None";
    case SuppressReason::BelowThreshold: return "BelowThreshold";
    case SuppressReason::CapReached: return "CapReached";
    case SuppressReason::Outranked: return "Outranked";
  }
  return "?";
}

struct ScoredCandidate {
  NotiType noti_type = NotiType::MemoryOverUse;
  double score = 0;
  Decision decision = Decision::Suppress;
  SuppressReason reason = SuppressReason::None;

  bool operator==(const ScoredCandidate&) const = default;
};

struct ThrottleConfig {
  double initial_threshold = 0.5;
  std::int64_t hourly_cap = 3;
  double delta = 0.1;
  double floor = 0.05;
  double ceiling = 0.95;
  std::int64_t patience = 2;
};

struct ThrottlePolicyState {
  double score_threshold = 0.5;
  std::int64_t hourly_cap = 3;
  std::int64_t consecutive_ignores = 0;
  Timestamp last_update = 0;
  std::vector<Timestamp> recent_shows;  // show times, pruned to the last hour

  static ThrottlePolicyState initial(const ThrottleConfig& cfg) {
    ThrottlePolicyState s;
    s.score_threshold = cfg.initial_threshold;
    s.hourly_cap = cfg.hourly_cap;
    return s;
  }

  std::int64_t displays_last_hour(Timestamp now) const {
    return std::count_if(recent_shows.begin(), recent_shows.end(), [&](Timestamp t) { return t > now - kHourMs; });
  }

  bool operator==(const ThrottlePolicyState&) const = default;
};

// All policy state of one user, keyed by notification type.
using UserPolicy = std::map<NotiType, ThrottlePolicyState>;

enum class Outcome { Clicked, Ignored, Cancelled };

inline std::optional<Outcome> parse_outcome(std::string_view s) {
  if (s == "clicked") return Outcome::Clicked;
  if (s == "ignored") return Outcome::Ignored;
  if (s == "cancelled") return Outcome::Cancelled;
  return std::nullopt;
}

// Sorts by score descending; equal scores keep notification-type order.
inline std::vector<ScoredCandidate> rank_scores(std::vector<ScoredCandidate> candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.noti_type < b.noti_type;
  });
  return candidates;
}

struct Candidate {
  NotiType noti_type = NotiType::MemoryOverUse;
  FeatureVector features;
};

inline std::vector<ScoredCandidate> score_candidates(const ModelSnapshot& model, std::span<const Candidate> candidates) {
  std::vector<ScoredCandidate> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back({c.noti_type, score(model, c.features)});
  return rank_scores(std::move(out));
}

inline ThrottlePolicyState& state_for(UserPolicy& policy, NotiType t, const ThrottleConfig& cfg) {
  auto it = policy.find(t);
  if (it == policy.end()) it = policy.emplace(t, ThrottlePolicyState::initial(cfg)).first;
  return it->second;
}

// Decides Show/Suppress for an already ranked list; at most one Show.
inline std::vector<ScoredCandidate> throttle(std::vector<ScoredCandidate> ranked, UserPolicy& policy, Timestamp now,
                                             const ThrottleConfig& cfg = {}) {
  bool shown = false;
  for (auto& c : ranked) {
    auto& s = state_for(policy, c.noti_type, cfg);
    std::erase_if(s.recent_shows, [&](Timestamp t) { return t <= now - kHourMs; });
    c.decision = Decision::Suppress;
    if (c.score < s.score_threshold) {
      c.reason = SuppressReason::BelowThreshold;
    } else if (s.displays_last_hour(now) >= s.hourly_cap) {
      c.reason = SuppressReason::CapReached;
    } else if (shown) {
      c.reason = SuppressReason::Outranked;
    } else {
      c.decision = Decision::Show;
      c.reason = SuppressReason::None;
      s.recent_shows.push_back(now);
      s.last_update = now;
      shown = true;
    }
  }
  return ranked;
}

inline ThrottlePolicyState record_feedback(ThrottlePolicyState s, Outcome outcome, Timestamp now,
                                           const ThrottleConfig& cfg = {}) {
  if (outcome == Outcome::Clicked) {
    s.score_threshold = std::max(cfg.floor, s.score_threshold * (1 - cfg.delta));
    s.consecutive_ignores = 0;
  } else {
    ++s.consecutive_ignores;
    if (s.consecutive_ignores >= cfg.patience) s.score_threshold = std::min(cfg.ceiling, s.score_threshold * (1 + cfg.delta));
  }
  s.last_update = now;
  return s;
}

inline void record_feedback(UserPolicy& policy, NotiType t, Outcome outcome, Timestamp now, const ThrottleConfig& cfg = {}) {
  auto& s = state_for(policy, t, cfg);
  s = record_feedback(std::move(s), outcome, now, cfg);
}

// Keyed (user, noti_type) -> state store. Each call to transact() holds the
// user's shard lock, so read-modify-write per user is atomic.
class PolicyStore {
 public:
  explicit PolicyStore(ThrottleConfig cfg = {}) : cfg_(cfg) {}

  const ThrottleConfig& config() const { return cfg_; }

  template <typename Fn>
  decltype(auto) transact(const UserId& user, Fn&& fn) {
    Shard& shard = shard_for(user);
    std::lock_guard lock(shard.mu);
    return std::invoke(std::forward<Fn>(fn), shard.users[user]);
  }

  UserPolicy snapshot(const UserId& user) {
    return transact(user, [](UserPolicy& p) { return p; });
  }

  // Plain-text export, one "user,noti_type,threshold,cap,ignores,last_update,shows" row per state.
  std::string export_text() {
    std::map<std::pair<UserId, NotiType>, ThrottlePolicyState> all;
    for (auto& shard : shards_) {
      std::lock_guard lock(shard.mu);
      for (const auto& [user, policy] : shard.users) {
        for (const auto& [type, state] : policy) all[{user, type}] = state;
      }
    }
    std::ostringstream out;
    out.precision(17);
    out << "# user,noti_type,score_threshold,hourly_cap,consecutive_ignores,last_update,recent_shows\n";
    for (const auto& [key, s] : all) {
      out << key.first << ',' << to_string(key.second) << ',' << s.score_threshold << ',' << s.hourly_cap << ','
          << s.consecutive_ignores << ',' << s.last_update << ',';
      for (std::size_t i = 0; i < s.recent_shows.size(); ++i) out << (i ? ";" : "") << s.recent_shows[i];
      out << '\n';
    }
    return out.str();
  }

  void import_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string tok;
      while (std::getline(ss, tok, ',')) f.push_back(tok);
      if (line.back() == ',') f.emplace_back();
      const auto type = f.size() == 7 ? parse_noti_type(f[1]) : std::nullopt;
      if (!type) throw Error(ErrorCode::CorruptFile, "policy store line " + std::to_string(line_no));
      ThrottlePolicyState s;
      try {
        s.score_threshold = std::stod(f[2]);
        s.hourly_cap = std::stoll(f[3]);
        s.consecutive_ignores = std::stoll(f[4]);
        s.last_update = std::stoll(f[5]);
        std::stringstream shows(f[6]);
        while (std::getline(shows, tok, ';')) {
          if (!tok.empty()) s.recent_shows.push_back(std::stoll(tok));
        }
      } catch (const std::exception&) {
        throw Error(ErrorCode::CorruptFile, "policy store line " + std::to_string(line_no));
      }
      transact(f[0], [&](UserPolicy& p) { p[*type] = s; });
    }
  }

 private:
  struct Shard {
    std::mutex mu;
    std::unordered_map<UserId, UserPolicy> users;
  };
  static constexpr std::size_t kShards = 16;

  Shard& shard_for(const UserId& user) { return shards_[std::hash<UserId>{}(user) % kShards]; }

  ThrottleConfig cfg_;
  std::array<Shard, kShards> shards_;
};

}  // namespace c3po
