#pragma once

// Closed-loop synthetic population. Users have hidden click propensities that
// are logistic in the same 32 slots the model sees, plus offsets the model
// cannot see (engagement, country, hour of day, notification type) and an
// annoyance penalty for over-display.
//
// Every random draw is keyed by (seed, user, day, hour, purpose) rather than
// taken from one sequential stream. Two policies run on the same seeds
// therefore face the same users, the same activity and the same click dice,
// which is what makes paired comparisons meaningful.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <charconv>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "c3po/checksum.hpp"
#include "c3po/dataset.hpp"
#include "c3po/error.hpp"
#include "c3po/featurizer.hpp"
#include "c3po/mlp.hpp"
#include "c3po/ranker.hpp"

namespace c3po {

inline constexpr Timestamp kSimEpochMs = 1'506'211'200'000;  // 2017-09-24 00:00 UTC

enum class Policy { AlwaysShow, Random, ModelRanker };

inline std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::AlwaysShow: return "always-show";
    case Policy::Random: return "random";
    case Policy::ModelRanker: return "model";
  }
  return "?";
}

inline std::optional<Policy> parse_policy(std::string_view s) {
  for (Policy p : {Policy::AlwaysShow, Policy::Random, Policy::ModelRanker}) {
    if (s == to_string(p)) return p;
  }
  return std::nullopt;
}

struct CountryProfile {
  std::string code;
  double share = 0;
  double offset = 0;  // hidden logit shift
};

// Reference centre and scale per slot; the ground-truth logit weights act on
// (x - centre) / scale, booleans on the raw 0/1 value.
inline constexpr std::array<double, kFeatureCount> kTruthCentre = {
    4000, 800, 60, 60, 32768, 2048, 0, 5, 5, 4, 4, 4, 4, 2, 2, 0, 0, 1, 2, 1, 25, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
inline constexpr std::array<double, kFeatureCount> kTruthScale = {
    4000, 600, 25, 90, 32768, 1024, 1, 4, 4, 4, 4, 4, 4, 2, 2, 1, 1, 2, 2, 2, 10, 4, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};

inline std::array<double, kFeatureCount> default_truth_weights() {
  std::array<double, kFeatureCount> w{};
  w[kRemainingStorage] = -0.35;
  w[kRemainingRam] = -0.42;
  w[kRemainingBattery] = -0.21;
  w[kInstalledDayCount] = -0.28;
  w[kIsCharging] = 0.28;
  w[kActiveScanCount] = 0.245;
  w[kActiveCleanCount] = 0.245;
  w[kActiveBoostCount] = 0.245;
  w[kNotificationClickCount] = 0.42;
  w[kNotiDisplay120] = -0.14;
  w[kNotiClick120] = 0.28;
  w[kNotificationCancelCount] = -0.28;
  w[kNotiClickLast] = 0.35;
  return w;
}

// Relative activity per hour; low 02-07, high 08-18 and 19-24.
inline std::array<double, 24> default_activity_curve() {
  std::array<double, 24> c{};
  for (int h = 0; h < 24; ++h) c[h] = h >= 2 && h < 8 ? 0.2 : h >= 19 ? 1.2 : 1.0;
  const double sum = std::accumulate(c.begin(), c.end(), 0.0);
  for (auto& x : c) x /= sum;
  return c;
}

struct PopulationSpec {
  std::size_t n_users = 6000;           // established users, present from day 0
  std::size_t new_users_per_day = 150;  // cohort joining on each of cohort_days
  std::size_t cohort_days = 14;
  std::vector<CountryProfile> countries = {
      {"US", 0.30, 0.20}, {"IN", 0.25, -0.15}, {"BR", 0.20, 0.10}, {"ID", 0.15, -0.20}, {"RU", 0.10, 0.0}};
  std::array<double, 3> type_offsets = {0.0, -0.1, 0.05};  // noti1, noti2, noti3
  double intercept = -2.05;
  std::array<double, kFeatureCount> weights = default_truth_weights();
  double engagement_weight = 0.5;  // hidden per-user logit shift per unit engagement
  std::array<double, 24> activity = default_activity_curve();
  double mean_active_hours = 8;  // expected active hours per user-day
  double offer_probability = 0.7;
  double annoyance = 0.25;  // logit penalty per display beyond the tolerated count
  int tolerated_daily_displays = 6;
  double churn_base = 0.005;      // daily hazard of established users
  double churn_new = 0.25;        // hazard at the end of the join day
  double churn_per_excess = 0.02; // hazard added per excess display, times annoyance
  std::uint64_t seed = 0;
};

struct SimUser {
  UserId id;
  int join_day = 0;  // negative for established users
  std::size_t country = 0;
  double engagement = 0;
  double activity_scale = 1;
  std::int64_t storage = 0;
  std::int64_t ram = 0;
  double free_storage = 0.2;
  double open_probability = 0.5;
  bool applock = false;
  bool cleaner = false;
};

struct Population {
  PopulationSpec spec;
  std::vector<SimUser> users;
};

namespace detail {

enum class Draw : std::uint64_t { Attr = 1, Day, Hour, Offer, Click, Outcome, Churn, Open, Pick };

inline std::uint64_t draw_key(std::uint64_t seed, std::uint64_t user, std::int64_t day, int hour, Draw what,
                              std::uint64_t extra = 0) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
  h = splitmix64(h ^ user);
  h = splitmix64(h ^ static_cast<std::uint64_t>(day + (1 << 20)));
  h = splitmix64(h ^ static_cast<std::uint64_t>(hour));
  h = splitmix64(h ^ static_cast<std::uint64_t>(what));
  return splitmix64(h ^ extra);
}

// Counter-based generator usable with <random> distributions.
class KeyedRng {
 public:
  using result_type = std::uint64_t;
  explicit KeyedRng(std::uint64_t key) : state_(key) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return splitmix64(state_ += 0x9e3779b97f4a7c15ULL); }
  double unit() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

inline double unit_draw(std::uint64_t key) { return KeyedRng(key).unit(); }

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

inline void validate(const PopulationSpec& s) {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (s.countries.empty()) bad("at least one country required");
  double share = 0;
  for (const auto& c : s.countries) {
    if (!(c.share >= 0) || !std::isfinite(c.offset)) bad("country shares must be >= 0");
    share += c.share;
  }
  if (std::fabs(share - 1.0) > 1e-9) bad("country shares must sum to 1");
  double act = 0;
  for (double a : s.activity) {
    if (!(a >= 0)) bad("activity curve must be nonnegative");
    act += a;
  }
  if (std::fabs(act - 1.0) > 1e-9) bad("activity curve must sum to 1 over 24 hours");
  for (double p : {s.offer_probability, s.churn_base, s.churn_new}) {
    if (!(p >= 0 && p <= 1)) bad("probabilities must lie in [0, 1]");
  }
  if (!(s.annoyance >= 0) || !(s.churn_per_excess >= 0) || !(s.mean_active_hours >= 0)) {
    bad("annoyance, churn_per_excess and mean_active_hours must be >= 0");
  }
  if (s.tolerated_daily_displays < 0) bad("tolerated_daily_displays must be >= 0");
  for (double w : s.weights) {
    if (!std::isfinite(w)) bad("ground-truth weights must be finite");
  }
}

inline Population generate_population(const PopulationSpec& spec) {
  validate(spec);
  Population pop;
  pop.spec = spec;
  const std::size_t total = spec.n_users + spec.new_users_per_day * spec.cohort_days;
  pop.users.reserve(total);
  std::vector<double> shares;
  for (const auto& c : spec.countries) shares.push_back(c.share);
  constexpr std::int64_t storages[] = {16384, 32768, 65536, 131072};
  constexpr std::int64_t rams[] = {1024, 2048, 3072, 4096};
  for (std::size_t i = 0; i < total; ++i) {
    detail::KeyedRng rng(detail::draw_key(spec.seed, i, 0, 0, detail::Draw::Attr));
    SimUser u;
    char id[24];
    std::snprintf(id, sizeof id, "u%07zu", i);
    u.id = id;
    u.country = std::discrete_distribution<std::size_t>(shares.begin(), shares.end())(rng);
    u.engagement = std::normal_distribution<double>(0, 1)(rng);
    u.activity_scale = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    u.storage = storages[rng() % 4];
    u.ram = rams[rng() % 4];
    u.free_storage = std::uniform_real_distribution<double>(0.03, 0.5)(rng);
    u.open_probability = std::uniform_real_distribution<double>(0.3, 0.8)(rng);
    u.applock = rng.unit() < detail::logistic(u.engagement - 0.5);
    u.cleaner = rng.unit() < 0.3;
    if (i < spec.n_users) {
      u.join_day = -1 - static_cast<int>(rng() % 365);
    } else {
      u.join_day = static_cast<int>((i - spec.n_users) / spec.new_users_per_day);
    }
    pop.users.push_back(std::move(u));
  }
  return pop;
}

// Device and process slots of one user in one active hour; `seed` is the
// simulation stream seed.
inline DeviceSnapshot simulate_snapshot(const Population& pop, std::size_t user, int day, int hour, std::uint64_t seed) {
  const SimUser& u = pop.users[user];
  DeviceSnapshot d;
  {
    // Seven-day usage counters: redrawn daily, scaled by engagement.
    detail::KeyedRng rng(detail::draw_key(seed, user, day, 0, detail::Draw::Day));
    const double e = std::exp(0.6 * u.engagement);
    auto pois = [&](double mean) { return static_cast<std::int64_t>(std::poisson_distribution<int>(mean)(rng)); };
    d.active_scan_count = pois(4 * e);
    d.passive_scan_count = pois(5);
    d.active_clean_count = pois(3 * e);
    d.passive_clean_count = pois(4);
    d.active_boost_count = pois(3 * e);
    d.passive_boost_count = pois(4);
    d.active_battery_saver_count = pois(1.5 * e);
    d.passive_battery_saver_count = pois(2);
    d.private_browsing_count = pois(1);
    d.wifi_test_count = pois(2);
    d.wifi_boost_count = pois(1);
    d.notification_display_count = pois(25);
    d.notification_click_count = std::binomial_distribution<std::int64_t>(
        d.notification_display_count, detail::logistic(-1.8 + 0.9 * u.engagement))(rng);
  }
  detail::KeyedRng rng(detail::draw_key(seed, user, day, hour, detail::Draw::Hour));
  std::normal_distribution<double> n(0, 1);
  d.storage = u.storage;
  d.ram = u.ram;
  const double fill = std::clamp(u.free_storage * (1 - 0.04 * (day % 7)) + 0.02 * n(rng), 0.005, 0.95);
  d.remaining_storage = static_cast<std::int64_t>(std::llround(fill * static_cast<double>(u.storage)));
  d.remaining_ram = static_cast<std::int64_t>(
      std::llround(std::uniform_real_distribution<double>(0.05, 0.6)(rng) * static_cast<double>(u.ram)));
  const double battery = 100 - 6.0 * ((hour - 7 + 24) % 24) + 10 * n(rng);
  d.remaining_battery = static_cast<std::int64_t>(std::llround(std::clamp(battery, 1.0, 100.0)));
  const double charge_p = hour < 7 ? 0.8 : d.remaining_battery < 25 ? 0.5 : 0.1;
  d.is_charging = rng.unit() < charge_p;
  d.installed_day_count = day - u.join_day;
  d.applock_enabled = u.applock;
  d.notification_cleaner_enabled = u.cleaner;
  return d;
}

// Ground-truth click probability for a displayed notification.
inline double click_probability(const Population& pop, std::size_t user, NotiType type, int hour,
                                const FeatureVector& v, int displays_today) {
  const auto& s = pop.spec;
  const SimUser& u = pop.users[user];
  double z = s.intercept + s.type_offsets[static_cast<std::size_t>(type) - 1] + s.engagement_weight * u.engagement +
             s.countries[u.country].offset;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (s.weights[i] == 0) continue;
    z += s.weights[i] * (is_boolean_slot(i) ? v[i] : (v[i] - kTruthCentre[i]) / kTruthScale[i]);
  }
  z += hour >= 2 && hour < 8 ? -0.3 : hour >= 19 || hour < 2 ? 0.2 : 0.0;
  z -= s.annoyance * std::max(0, displays_today - s.tolerated_daily_displays);
  return detail::logistic(z);
}

// ---------------------------------------------------------------------------
// Event log

struct SnapshotRecord {
  UserId user_id;
  Timestamp timestamp = 0;
  DeviceSnapshot snapshot;
  bool operator==(const SnapshotRecord&) const = default;
};

struct UserRecord {
  UserId user_id;
  int join_day = 0;
  std::string country;
  bool operator==(const UserRecord&) const = default;
};

struct EventLog {
  std::vector<UserRecord> users;
  std::vector<EventRecord> events;  // sorted by timestamp
  std::vector<SnapshotRecord> snapshots;
};

inline int sim_day(Timestamp t) { return static_cast<int>((t - kSimEpochMs) / kDayMs); }

// ---------------------------------------------------------------------------
// Reports

struct SimCell {
  std::uint64_t offers = 0;
  std::uint64_t displays = 0;
  std::uint64_t clicks = 0;

  SimCell& operator+=(const SimCell& o) {
    offers += o.offers;
    displays += o.displays;
    clicks += o.clicks;
    return *this;
  }
  double ctr() const { return displays ? static_cast<double>(clicks) / static_cast<double>(displays) : 0.0; }
  bool operator==(const SimCell&) const = default;
};

struct CohortRetention {
  int cohort_day = 0;
  std::size_t cohort_size = 0;
  std::size_t retained = 0;
  double rate() const { return cohort_size ? static_cast<double>(retained) / static_cast<double>(cohort_size) : 0.0; }
  bool operator==(const CohortRetention&) const = default;
};

struct SimReport {
  std::string policy;
  int days = 0;
  std::vector<SimCell> cells;  // [day][hour][type], flattened
  std::vector<CohortRetention> retention;
  std::array<double, 3> mean_threshold{};  // per type, over users with adaptive state
  std::size_t churned = 0;

  SimCell& at(int day, int hour, std::size_t type_index) {
    return cells[(static_cast<std::size_t>(day) * 24 + static_cast<std::size_t>(hour)) * 3 + type_index];
  }
  const SimCell& at(int day, int hour, std::size_t type_index) const {
    return cells[(static_cast<std::size_t>(day) * 24 + static_cast<std::size_t>(hour)) * 3 + type_index];
  }

  // Sum over days [begin, end); all types when `type` is empty.
  SimCell total(int begin, int end, std::optional<NotiType> type = std::nullopt) const {
    SimCell sum;
    for (int d = std::max(0, begin); d < std::min(end, days); ++d) {
      for (int h = 0; h < 24; ++h) {
        for (std::size_t t = 0; t < 3; ++t) {
          if (!type || static_cast<std::size_t>(*type) - 1 == t) sum += at(d, h, t);
        }
      }
    }
    return sum;
  }

  // Pooled retention over the cohorts that have a full 7-day window.
  double pooled_retention() const {
    std::size_t n = 0, r = 0;
    for (const auto& c : retention) {
      n += c.cohort_size;
      r += c.retained;
    }
    return n ? static_cast<double>(r) / static_cast<double>(n) : 0.0;
  }
};

struct SimOptions {
  // Days at the start of the period run under the random policy, standing in
  // for the rule-based system that preceded the model. Gives every user a
  // display history before the evaluated policy takes over.
  int legacy_days = 0;
  bool collect_log = false;
  bool collect_examples = false;
  ThrottleConfig throttle;
};

struct SimResult {
  SimReport report;
  EventLog log;
  Dataset examples;          // one per display, canonical order, ids 0..n-1
  std::vector<double> truth;  // ground-truth click probability per example
};

namespace detail {

inline void canonical_order(Dataset& examples, std::vector<double>* truth,
                            const std::vector<std::size_t>& user_of) {
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = examples[a];
    const auto& y = examples[b];
    if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
    if (user_of[a] != user_of[b]) return user_of[a] < user_of[b];
    return x.noti_type < y.noti_type;
  });
  Dataset sorted;
  std::vector<double> t;
  sorted.reserve(examples.size());
  for (std::size_t i : idx) {
    sorted.push_back(std::move(examples[i]));
    sorted.back().id = sorted.size() - 1;
    if (truth) t.push_back((*truth)[i]);
  }
  examples = std::move(sorted);
  if (truth) *truth = std::move(t);
}

inline std::size_t user_index(const UserId& id) { return static_cast<std::size_t>(std::stoull(id.substr(1))); }

}  // namespace detail

inline SimResult simulate_period(const Population& pop, Policy policy, int days, std::uint64_t seed,
                                 const ModelSnapshot* model = nullptr, const SimOptions& opts = {}) {
  if (policy == Policy::ModelRanker && !model) throw Error(ErrorCode::MissingModel, "model policy needs a trained model");
  if (days < 0) throw Error(ErrorCode::InvalidSpec, "days must be >= 0");
  const auto& spec = pop.spec;
  const std::size_t n = pop.users.size();
  SimResult out;
  SimReport& rep = out.report;
  rep.policy = std::string(to_string(policy));
  rep.days = days;
  rep.cells.assign(static_cast<std::size_t>(days) * 24 * 3, {});

  if (opts.collect_log) {
    for (const auto& u : pop.users) {
      if (u.join_day < days) out.log.users.push_back({u.id, u.join_day, spec.countries[u.country].code});
    }
  }

  std::vector<std::array<EventWindow, 3>> windows(n);
  std::vector<UserPolicy> policies(n);
  std::vector<bool> churned(n, false);
  std::vector<int> displays_today(n, 0);
  std::vector<std::vector<bool>> open_days(n, std::vector<bool>(static_cast<std::size_t>(std::max(days, 0)), false));
  std::vector<std::size_t> example_user;
  std::vector<EventRecord> hour_events;
  std::vector<Candidate> candidates;
  std::vector<double> truths;

  const std::uint64_t stream = seed ^ splitmix64(spec.seed);
  const auto key = [&](std::size_t u, int d, int h, detail::Draw w, std::uint64_t extra = 0) {
    return detail::draw_key(stream, u, d, h, w, extra);
  };

  for (int day = 0; day < days; ++day) {
    const Policy active = day < opts.legacy_days ? Policy::Random : policy;
    std::fill(displays_today.begin(), displays_today.end(), 0);
    for (int hour = 0; hour < 24; ++hour) {
      const Timestamp hour_start = kSimEpochMs + day * kDayMs + hour * kHourMs;
      hour_events.clear();
      for (std::size_t u = 0; u < n; ++u) {
        const SimUser& user = pop.users[u];
        if (user.join_day > day || churned[u]) continue;
        detail::KeyedRng hr(key(u, day, hour, detail::Draw::Hour));
        const double p_active = std::min(1.0, spec.mean_active_hours * spec.activity[static_cast<std::size_t>(hour)] *
                                                  user.activity_scale);
        if (hr.unit() >= p_active) continue;
        const Timestamp now = hour_start + static_cast<Timestamp>(hr() % 50) * kMinuteMs + static_cast<Timestamp>(hr() % 60'000);

        if (hr.unit() < user.open_probability) {
          open_days[u][static_cast<std::size_t>(day)] = true;
          if (opts.collect_log) {
            hour_events.push_back({user.id, NotiType::MemoryOverUse, EventKind::AppOpen,
                                   hour_start + static_cast<Timestamp>(hr() % kHourMs)});
          }
        }

        candidates.clear();
        for (NotiType t : kAllNotiTypes) {
          if (detail::unit_draw(key(u, day, hour, detail::Draw::Offer, static_cast<std::uint64_t>(t))) < spec.offer_probability) {
            candidates.push_back({t, {}});
          }
        }
        if (candidates.empty()) continue;

        const DeviceSnapshot snap = simulate_snapshot(pop, u, day, hour, stream ^ 0x5bd1e995ULL);
        if (opts.collect_log) out.log.snapshots.push_back({user.id, hour_start, snap});
        for (auto& c : candidates) {
          const auto ti = static_cast<std::size_t>(c.noti_type) - 1;
          c.features = assemble_feature_vector(snap, windows[u][ti].counters(now));
          rep.at(day, hour, ti).offers += 1;
        }

        std::vector<NotiType> shown;
        switch (active) {
          case Policy::AlwaysShow:
            for (const auto& c : candidates) shown.push_back(c.noti_type);
            break;
          case Policy::Random:
            shown.push_back(candidates[detail::KeyedRng(key(u, day, hour, detail::Draw::Pick))() % candidates.size()].noti_type);
            break;
          case Policy::ModelRanker: {
            const auto decided = throttle(score_candidates(*model, candidates), policies[u], now, opts.throttle);
            for (const auto& d : decided) {
              if (d.decision == Decision::Show) shown.push_back(d.noti_type);
            }
            break;
          }
        }

        for (NotiType t : shown) {
          const auto ti = static_cast<std::size_t>(t) - 1;
          const auto& features =
              std::find_if(candidates.begin(), candidates.end(), [&](const Candidate& c) { return c.noti_type == t; })->features;
          const double p = click_probability(pop, u, t, hour, features, displays_today[u]);
          displays_today[u] += 1;
          detail::KeyedRng orng(key(u, day, hour, detail::Draw::Outcome, static_cast<std::uint64_t>(t)));
          const bool clicked = detail::unit_draw(key(u, day, hour, detail::Draw::Click, static_cast<std::uint64_t>(t))) < p;
          const Timestamp reaction = now + 1000 + static_cast<Timestamp>(orng() % (5 * kMinuteMs - 1000));
          const Outcome outcome = clicked ? Outcome::Clicked : orng.unit() < 0.3 ? Outcome::Cancelled : Outcome::Ignored;

          auto& w = windows[u][ti];
          const EventRecord display{user.id, t, EventKind::Display, now};
          w.push(display);
          if (opts.collect_log) hour_events.push_back(display);
          if (outcome != Outcome::Ignored) {
            const EventRecord reply{user.id, t, clicked ? EventKind::Click : EventKind::Cancel, reaction};
            w.push(reply);
            if (opts.collect_log) hour_events.push_back(reply);
          }
          if (active == Policy::ModelRanker) record_feedback(policies[u], t, outcome, reaction, opts.throttle);

          auto& cell = rep.at(day, hour, ti);
          cell.displays += 1;
          cell.clicks += clicked ? 1 : 0;
          if (opts.collect_examples) {
            LabeledExample ex;
            ex.features = features;
            ex.label = clicked ? 1 : 0;
            ex.noti_type = t;
            ex.timestamp = now;
            out.examples.push_back(std::move(ex));
            out.truth.push_back(p);
            example_user.push_back(u);
          }
        }
      }
      if (opts.collect_log) {
        std::stable_sort(hour_events.begin(), hour_events.end(),
                         [](const EventRecord& a, const EventRecord& b) { return a.timestamp < b.timestamp; });
        out.log.events.insert(out.log.events.end(), hour_events.begin(), hour_events.end());
      }
    }
    // Churn at the end of the day; excess displays raise the hazard.
    for (std::size_t u = 0; u < n; ++u) {
      const SimUser& user = pop.users[u];
      if (user.join_day > day || churned[u]) continue;
      const int excess = std::max(0, displays_today[u] - spec.tolerated_daily_displays);
      const double hazard = (user.join_day == day ? spec.churn_new : spec.churn_base) +
                            spec.annoyance * spec.churn_per_excess * excess;
      if (detail::unit_draw(key(u, day, 0, detail::Draw::Churn)) < hazard) {
        churned[u] = true;
        rep.churned += 1;
      }
    }
  }

  for (int c = 0; c + 7 < days; ++c) {
    CohortRetention r;
    r.cohort_day = c;
    for (std::size_t u = 0; u < n; ++u) {
      if (pop.users[u].join_day != c) continue;
      ++r.cohort_size;
      bool back = false;
      for (int d = c + 1; d <= c + 7; ++d) back = back || open_days[u][static_cast<std::size_t>(d)];
      r.retained += back ? 1 : 0;
    }
    if (r.cohort_size) rep.retention.push_back(r);
  }

  if (policy == Policy::ModelRanker) {
    std::array<double, 3> sum{};
    std::array<std::size_t, 3> count{};
    for (const auto& p : policies) {
      for (const auto& [t, s] : p) {
        const auto ti = static_cast<std::size_t>(t) - 1;
        sum[ti] += s.score_threshold;
        count[ti] += 1;
      }
    }
    for (std::size_t t = 0; t < 3; ++t) rep.mean_threshold[t] = count[t] ? sum[t] / static_cast<double>(count[t]) : 0.0;
  }
  if (opts.collect_examples) detail::canonical_order(out.examples, &out.truth, example_user);
  return out;
}

// ---------------------------------------------------------------------------
// Log-driven featurization and retention

// One labeled example per Display: features from the pair's strictly earlier
// events plus the user's latest snapshot; label = the display was clicked.
inline Dataset featurize_log(const EventLog& log) {
  std::unordered_map<UserId, std::vector<const SnapshotRecord*>> snaps;
  for (const auto& s : log.snapshots) snaps[s.user_id].push_back(&s);
  for (auto& [id, v] : snaps) {
    std::stable_sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->timestamp < b->timestamp; });
  }

  struct Pending {
    std::size_t example;
    std::size_t pair;
  };
  std::map<std::pair<UserId, NotiType>, std::size_t> pair_ids;
  std::vector<EventWindow> windows;
  std::vector<std::optional<std::size_t>> last_display;  // per pair, example awaiting a click
  Dataset out;
  std::vector<std::size_t> user_of;
  std::unordered_map<UserId, std::size_t> user_ids;

  for (const auto& e : log.events) {
    if (e.kind == EventKind::AppOpen) continue;
    auto [it, fresh] = pair_ids.try_emplace({e.user_id, e.noti_type}, windows.size());
    if (fresh) {
      windows.emplace_back();
      last_display.emplace_back();
    }
    const std::size_t pair = it->second;
    if (e.kind == EventKind::Display) {
      const auto sit = snaps.find(e.user_id);
      if (sit == snaps.end()) throw Error(ErrorCode::InvalidSnapshot, "display without a snapshot for " + e.user_id);
      const auto& list = sit->second;
      auto pos = std::upper_bound(list.begin(), list.end(), e.timestamp,
                                  [](Timestamp t, const SnapshotRecord* s) { return t < s->timestamp; });
      if (pos == list.begin()) throw Error(ErrorCode::InvalidSnapshot, "display precedes every snapshot of " + e.user_id);
      LabeledExample ex;
      ex.features = assemble_feature_vector((*std::prev(pos))->snapshot, windows[pair].counters(e.timestamp));
      ex.noti_type = e.noti_type;
      ex.timestamp = e.timestamp;
      last_display[pair] = out.size();
      out.push_back(std::move(ex));
      user_of.push_back(user_ids.try_emplace(e.user_id, user_ids.size()).first->second);
    }
    if (windows[pair].push(e) == PushResult::Accepted && e.kind == EventKind::Click && last_display[pair]) {
      out[*last_display[pair]].label = 1;
      last_display[pair].reset();
    }
  }
  // Canonical order sorts by user index; map ids back to their numeric order.
  std::vector<std::size_t> numeric(user_ids.size());
  for (const auto& [id, idx] : user_ids) numeric[idx] = detail::user_index(id);
  for (auto& u : user_of) u = numeric[u];
  detail::canonical_order(out, nullptr, user_of);
  return out;
}

inline double retention_7day(const EventLog& log, int cohort_day) {
  std::unordered_map<UserId, bool> cohort;
  for (const auto& u : log.users) {
    if (u.join_day == cohort_day) cohort[u.user_id] = false;
  }
  if (cohort.empty()) throw Error(ErrorCode::EmptyCohort, "no users joined on day " + std::to_string(cohort_day));
  for (const auto& e : log.events) {
    if (e.kind != EventKind::AppOpen) continue;
    const int d = sim_day(e.timestamp);
    if (d < cohort_day + 1 || d > cohort_day + 7) continue;
    auto it = cohort.find(e.user_id);
    if (it != cohort.end()) it->second = true;
  }
  const auto back = std::count_if(cohort.begin(), cohort.end(), [](const auto& kv) { return kv.second; });
  return static_cast<double>(back) / static_cast<double>(cohort.size());
}

// ---------------------------------------------------------------------------
// A/B comparison (deltas are B - A)

struct AbRow {
  int day = 0;
  int hour = 0;
  NotiType noti_type = NotiType::MemoryOverUse;
  SimCell a, b;
};

struct AbSummary {
  NotiType noti_type = NotiType::MemoryOverUse;
  SimCell a, b;
  double delta_displays() const { return static_cast<double>(b.displays) - static_cast<double>(a.displays); }
  double delta_ctr() const { return b.ctr() - a.ctr(); }
};

struct AbComparison {
  std::string policy_a, policy_b;
  std::vector<AbRow> rows;
  std::array<AbSummary, 3> summary;
  double retention_a = 0, retention_b = 0;
};

inline AbComparison ab_compare(const SimReport& a, const SimReport& b) {
  if (a.days != b.days || a.cells.size() != b.cells.size()) {
    throw Error(ErrorCode::PeriodMismatch, "reports cover " + std::to_string(a.days) + " and " + std::to_string(b.days) + " days");
  }
  AbComparison cmp;
  cmp.policy_a = a.policy;
  cmp.policy_b = b.policy;
  for (int d = 0; d < a.days; ++d) {
    for (int h = 0; h < 24; ++h) {
      for (std::size_t t = 0; t < 3; ++t) {
        cmp.rows.push_back({d, h, kAllNotiTypes[t], a.at(d, h, t), b.at(d, h, t)});
        cmp.summary[t].a += a.at(d, h, t);
        cmp.summary[t].b += b.at(d, h, t);
      }
    }
  }
  for (std::size_t t = 0; t < 3; ++t) cmp.summary[t].noti_type = kAllNotiTypes[t];
  cmp.retention_a = a.pooled_retention();
  cmp.retention_b = b.pooled_retention();
  return cmp;
}

// ---------------------------------------------------------------------------
// CSV emitters and parsers

namespace detail {

inline std::string fixed6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    fn(line, line_no);
  }
}

inline std::int64_t parse_i64(std::string_view tok, ErrorCode code, std::size_t line_no) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size()) {
    throw Error(code, "line " + std::to_string(line_no) + ": bad integer '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace detail

inline std::string emit_report_csv(const SimReport& r) {
  std::string out = "day,hour,noti_type,displays,clicks,ctr\n";
  for (int d = 0; d < r.days; ++d) {
    for (int h = 0; h < 24; ++h) {
      for (std::size_t t = 0; t < 3; ++t) {
        const auto& c = r.at(d, h, t);
        out += std::to_string(d) + ',' + std::to_string(h) + ',' + to_string(kAllNotiTypes[t]) + ',' +
               std::to_string(c.displays) + ',' + std::to_string(c.clicks) + ',' + detail::fixed6(c.ctr()) + '\n';
      }
    }
  }
  return out;
}

// Rebuilds the display/click cells of a report CSV (offers are not stored).
inline SimReport parse_report_csv(std::string_view text, std::string policy = {}) {
  SimReport r;
  r.policy = std::move(policy);
  bool header = true;
  detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (header) {
      header = false;
      if (line != "day,hour,noti_type,displays,clicks,ctr") throw Error(ErrorCode::CorruptFile, "not a report CSV");
      return;
    }
    const auto f = detail::split_commas(line);
    if (f.size() != 6) throw Error(ErrorCode::CorruptFile, "report line " + std::to_string(no) + ": expected 6 fields");
    const auto day = detail::parse_i64(f[0], ErrorCode::CorruptFile, no);
    const auto hour = detail::parse_i64(f[1], ErrorCode::CorruptFile, no);
    const auto type = parse_noti_type(f[2]);
    if (day < 0 || day > 100000 || hour < 0 || hour > 23 || !type) {
      throw Error(ErrorCode::CorruptFile, "report line " + std::to_string(no) + ": bad key");
    }
    if (day >= r.days) {
      r.days = static_cast<int>(day) + 1;
      r.cells.resize(static_cast<std::size_t>(r.days) * 72);
    }
    auto& c = r.at(static_cast<int>(day), static_cast<int>(hour), static_cast<std::size_t>(*type) - 1);
    c.displays = static_cast<std::uint64_t>(detail::parse_i64(f[3], ErrorCode::CorruptFile, no));
    c.clicks = static_cast<std::uint64_t>(detail::parse_i64(f[4], ErrorCode::CorruptFile, no));
    if (c.clicks > c.displays) throw Error(ErrorCode::CorruptFile, "report line " + std::to_string(no) + ": clicks > displays");
  });
  return r;
}

inline std::string emit_retention_csv(const std::vector<SimReport>& reports) {
  std::string out = "cohort_day,policy,retention7\n";
  for (const auto& r : reports) {
    for (const auto& c : r.retention) out += std::to_string(c.cohort_day) + ',' + r.policy + ',' + detail::fixed6(c.rate()) + '\n';
  }
  return out;
}

inline std::string emit_ab_csv(const AbComparison& cmp) {
  std::string out = "day,hour,noti_type,displays_a,displays_b,delta_displays,clicks_a,clicks_b,ctr_a,ctr_b,delta_ctr\n";
  auto row = [&](const std::string& day, const std::string& hour, NotiType t, const SimCell& a, const SimCell& b) {
    out += day + ',' + hour + ',' + to_string(t) + ',' + std::to_string(a.displays) + ',' + std::to_string(b.displays) + ',' +
           std::to_string(static_cast<std::int64_t>(b.displays) - static_cast<std::int64_t>(a.displays)) + ',' +
           std::to_string(a.clicks) + ',' + std::to_string(b.clicks) + ',' + detail::fixed6(a.ctr()) + ',' +
           detail::fixed6(b.ctr()) + ',' + detail::fixed6(b.ctr() - a.ctr()) + '\n';
  };
  for (const auto& r : cmp.rows) row(std::to_string(r.day), std::to_string(r.hour), r.noti_type, r.a, r.b);
  for (const auto& s : cmp.summary) row("all", "all", s.noti_type, s.a, s.b);
  return out;
}

inline std::string emit_events_csv(const EventLog& log) {
  std::string out = "user_id,noti_type,kind,timestamp\n";
  for (const auto& e : log.events) {
    out += e.user_id + ',' + (e.kind == EventKind::AppOpen ? std::string("-") : to_string(e.noti_type)) + ',' +
           std::string(to_string(e.kind)) + ',' + std::to_string(e.timestamp) + '\n';
  }
  return out;
}

inline std::vector<EventRecord> parse_events_csv(std::string_view text) {
  std::vector<EventRecord> out;
  bool header = true;
  detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (header) {
      header = false;
      if (line == "user_id,noti_type,kind,timestamp") return;
    }
    const auto f = detail::split_commas(line);
    const auto where = "events line " + std::to_string(no);
    if (f.size() != 4 || f[0].empty()) throw Error(ErrorCode::InvalidEvent, where + ": expected user_id,noti_type,kind,timestamp");
    const auto kind = parse_event_kind(f[2]);
    if (!kind) throw Error(ErrorCode::InvalidEvent, where + ": unknown kind '" + std::string(f[2]) + "'");
    EventRecord e;
    e.user_id = std::string(f[0]);
    e.kind = *kind;
    if (*kind == EventKind::AppOpen && f[1] == "-") {
      e.noti_type = NotiType::MemoryOverUse;  // app opens carry no type
    } else {
      const auto type = parse_noti_type(f[1]);
      if (!type) throw Error(ErrorCode::InvalidEvent, where + ": unknown noti_type '" + std::string(f[1]) + "'");
      e.noti_type = *type;
    }
    e.timestamp = detail::parse_i64(f[3], ErrorCode::InvalidEvent, no);
    if (!out.empty() && e.timestamp < out.back().timestamp) throw Error(ErrorCode::UnsortedHistory, where + ": out of order");
    out.push_back(std::move(e));
  });
  return out;
}

inline std::string emit_snapshots_csv(const EventLog& log) {
  std::string out = "user_id,timestamp";
  for (std::size_t i = 0; i < kDeviceSlots; ++i) out += ',' + std::string(kFeatureNames[i]);
  out += '\n';
  for (const auto& s : log.snapshots) {
    out += s.user_id + ',' + std::to_string(s.timestamp);
    for (double x : s.snapshot.to_slots()) {
      out += ',';
      detail::append_number(out, x);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<SnapshotRecord> parse_snapshots_csv(std::string_view text) {
  std::vector<SnapshotRecord> out;
  detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (line.starts_with("user_id,")) return;
    const auto comma = line.find(',');
    const auto comma2 = comma == std::string_view::npos ? comma : line.find(',', comma + 1);
    if (comma2 == std::string_view::npos) throw Error(ErrorCode::InvalidSnapshot, "snapshot line " + std::to_string(no));
    SnapshotRecord s;
    s.user_id = std::string(line.substr(0, comma));
    s.timestamp = detail::parse_i64(line.substr(comma + 1, comma2 - comma - 1), ErrorCode::InvalidSnapshot, no);
    const auto values = detail::parse_csv_numbers(line.substr(comma2 + 1));
    if (values.size() != kDeviceSlots) {
      throw FieldError(ErrorCode::WrongFieldCount, values.size(), kDeviceSlots, "snapshot line " + std::to_string(no));
    }
    s.snapshot = DeviceSnapshot::from_slots(values);
    if (!is_valid(s.snapshot)) throw Error(ErrorCode::InvalidSnapshot, "snapshot line " + std::to_string(no));
    out.push_back(std::move(s));
  });
  return out;
}

inline std::string emit_users_csv(const EventLog& log) {
  std::string out = "user_id,join_day,country\n";
  for (const auto& u : log.users) out += u.user_id + ',' + std::to_string(u.join_day) + ',' + u.country + '\n';
  return out;
}

inline std::vector<UserRecord> parse_users_csv(std::string_view text) {
  std::vector<UserRecord> out;
  detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (line == "user_id,join_day,country") return;
    const auto f = detail::split_commas(line);
    if (f.size() != 3 || f[0].empty()) throw Error(ErrorCode::CorruptFile, "users line " + std::to_string(no));
    out.push_back({std::string(f[0]), static_cast<int>(detail::parse_i64(f[1], ErrorCode::CorruptFile, no)), std::string(f[2])});
  });
  return out;
}

}  // namespace c3po
