#pragma once

// Event histories + device snapshots -> 32-slot feature vectors, and the
// comma-separated wire codec for those vectors.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "c3po/error.hpp"

namespace c3po {

using Timestamp = std::int64_t;  // milliseconds since epoch, UTC
using UserId = std::string;

inline constexpr Timestamp kMinuteMs = 60'000;
inline constexpr Timestamp kHourMs = 60 * kMinuteMs;
inline constexpr Timestamp kDayMs = 24 * kHourMs;
inline constexpr Timestamp kRetentionHorizonMs = kDayMs;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kFeatureCount = 32;

// Notification types; enumeration order is the ranking tie-break order.
enum class NotiType : std::uint8_t {
  MemoryOverUse = 1,   // noti1
  TemperatureHigh = 2, // noti2
  JunkClean = 3,       // noti3
};

inline constexpr std::array<NotiType, 3> kAllNotiTypes = {NotiType::MemoryOverUse, NotiType::TemperatureHigh,
                                                          NotiType::JunkClean};

inline std::string to_string(NotiType t) { return "noti" + std::to_string(static_cast<int>(t)); }

inline std::optional<NotiType> parse_noti_type(std::string_view s) {
  for (NotiType t : kAllNotiTypes) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

enum class EventKind : std::uint8_t { Display, Click, Cancel, AppOpen };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Display: return "display";
    case EventKind::Click: return "click";
    case EventKind::Cancel: return "cancel";
    case EventKind::AppOpen: return "app_open";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (EventKind k : {EventKind::Display, EventKind::Click, EventKind::Cancel, EventKind::AppOpen}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

struct EventRecord {
  UserId user_id;
  NotiType noti_type = NotiType::MemoryOverUse;
  EventKind kind = EventKind::Display;
  Timestamp timestamp = 0;

  bool operator==(const EventRecord&) const = default;
};

// Canonical slot order: device, device extras, process, ranking, recency.
enum Slot : std::size_t {
  kRemainingStorage,
  kRemainingRam,
  kRemainingBattery,
  kInstalledDayCount,
  kStorage,
  kRam,
  kIsCharging,
  kActiveScanCount,
  kPassiveScanCount,
  kActiveCleanCount,
  kPassiveCleanCount,
  kActiveBoostCount,
  kPassiveBoostCount,
  kActiveBatterySaverCount,
  kPassiveBatterySaverCount,
  kApplockEnabled,
  kNotificationCleanerEnabled,
  kPrivateBrowsingCount,
  kWifiTestCount,
  kWifiBoostCount,
  kNotificationDisplayCount,
  kNotificationClickCount,
  kNotiDisplay30,
  kNotiClick30,
  kNotiDisplay60,
  kNotiClick60,
  kNotiDisplay120,
  kNotiClick120,
  kNotificationCancelCount,
  kIsNull,
  kNotiClickLast,
  kNotiClickLast2,
};

inline constexpr std::size_t kDeviceSlots = kNotiDisplay30;  // slots filled from DeviceSnapshot

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "remaining_storage",
    "remaining_ram",
    "remaining_battery",
    "installed_day_count",
    "storage",
    "ram",
    "is_charging",
    "active_scan_count",
    "passive_scan_count",
    "active_clean_count",
    "passive_clean_count",
    "active_boost_count",
    "passive_boost_count",
    "active_battery_saver_count",
    "passive_battery_saver_count",
    "applock_enabled",
    "notification_cleaner_enabled",
    "private_browsing_count",
    "wifi_test_count",
    "wifi_boost_count",
    "notification_display_count",
    "notification_click_count",
    "noti_display_30",
    "noti_click_30",
    "noti_display_60",
    "noti_click_60",
    "noti_display_120",
    "noti_click_120",
    "notification_cancel_count",
    "is_null",
    "noti_click_last",
    "noti_click_last2",
};

constexpr bool is_boolean_slot(std::size_t slot) {
  return slot == kIsCharging || slot == kApplockEnabled || slot == kNotificationCleanerEnabled || slot == kIsNull ||
         slot == kNotiClickLast || slot == kNotiClickLast2;
}

inline std::optional<std::size_t> feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  return std::nullopt;
}

struct FeatureVector {
  int schema_version = kSchemaVersion;
  std::array<double, kFeatureCount> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const FeatureVector&) const = default;
};

// Semantic check (booleans in {0,1}, counters nonnegative, all finite).
// The wire codec is purely syntactic and does not call this.
inline bool is_valid(const FeatureVector& v) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double x = v.values[i];
    if (!std::isfinite(x) || x < 0) return false;
    if (is_boolean_slot(i) && x != 0 && x != 1) return false;
  }
  return true;
}

struct DeviceSnapshot {
  std::int64_t remaining_storage = 0;  // MB
  std::int64_t remaining_ram = 0;      // MB
  std::int64_t remaining_battery = 0;  // percent
  std::int64_t installed_day_count = 0;
  std::int64_t storage = 0;  // MB
  std::int64_t ram = 0;      // MB
  bool is_charging = false;
  std::int64_t active_scan_count = 0;
  std::int64_t passive_scan_count = 0;
  std::int64_t active_clean_count = 0;
  std::int64_t passive_clean_count = 0;
  std::int64_t active_boost_count = 0;
  std::int64_t passive_boost_count = 0;
  std::int64_t active_battery_saver_count = 0;
  std::int64_t passive_battery_saver_count = 0;
  bool applock_enabled = false;
  bool notification_cleaner_enabled = false;
  std::int64_t private_browsing_count = 0;
  std::int64_t wifi_test_count = 0;
  std::int64_t wifi_boost_count = 0;
  std::int64_t notification_display_count = 0;
  std::int64_t notification_click_count = 0;

  bool operator==(const DeviceSnapshot&) const = default;

  // The snapshot's slots [0, kDeviceSlots) in canonical order.
  std::array<double, kDeviceSlots> to_slots() const {
    return {static_cast<double>(remaining_storage),
            static_cast<double>(remaining_ram),
            static_cast<double>(remaining_battery),
            static_cast<double>(installed_day_count),
            static_cast<double>(storage),
            static_cast<double>(ram),
            is_charging ? 1.0 : 0.0,
            static_cast<double>(active_scan_count),
            static_cast<double>(passive_scan_count),
            static_cast<double>(active_clean_count),
            static_cast<double>(passive_clean_count),
            static_cast<double>(active_boost_count),
            static_cast<double>(passive_boost_count),
            static_cast<double>(active_battery_saver_count),
            static_cast<double>(passive_battery_saver_count),
            applock_enabled ? 1.0 : 0.0,
            notification_cleaner_enabled ? 1.0 : 0.0,
            static_cast<double>(private_browsing_count),
            static_cast<double>(wifi_test_count),
            static_cast<double>(wifi_boost_count),
            static_cast<double>(notification_display_count),
            static_cast<double>(notification_click_count)};
  }

  static DeviceSnapshot from_slots(std::span<const double> s) {
    if (s.size() < kDeviceSlots) throw Error(ErrorCode::InvalidSnapshot, "need 22 device slots");
    auto i64 = [](double x) { return static_cast<std::int64_t>(std::llround(x)); };
    DeviceSnapshot d;
    d.remaining_storage = i64(s[kRemainingStorage]);
    d.remaining_ram = i64(s[kRemainingRam]);
    d.remaining_battery = i64(s[kRemainingBattery]);
    d.installed_day_count = i64(s[kInstalledDayCount]);
    d.storage = i64(s[kStorage]);
    d.ram = i64(s[kRam]);
    d.is_charging = s[kIsCharging] != 0;
    d.active_scan_count = i64(s[kActiveScanCount]);
    d.passive_scan_count = i64(s[kPassiveScanCount]);
    d.active_clean_count = i64(s[kActiveCleanCount]);
    d.passive_clean_count = i64(s[kPassiveCleanCount]);
    d.active_boost_count = i64(s[kActiveBoostCount]);
    d.passive_boost_count = i64(s[kPassiveBoostCount]);
    d.active_battery_saver_count = i64(s[kActiveBatterySaverCount]);
    d.passive_battery_saver_count = i64(s[kPassiveBatterySaverCount]);
    d.applock_enabled = s[kApplockEnabled] != 0;
    d.notification_cleaner_enabled = s[kNotificationCleanerEnabled] != 0;
    d.private_browsing_count = i64(s[kPrivateBrowsingCount]);
    d.wifi_test_count = i64(s[kWifiTestCount]);
    d.wifi_boost_count = i64(s[kWifiBoostCount]);
    d.notification_display_count = i64(s[kNotificationDisplayCount]);
    d.notification_click_count = i64(s[kNotificationClickCount]);
    return d;
  }
};

inline bool is_valid(const DeviceSnapshot& d) {
  const auto slots = d.to_slots();
  if (std::any_of(slots.begin(), slots.end(), [](double x) { return x < 0; })) return false;
  return d.remaining_storage <= d.storage && d.remaining_ram <= d.ram && d.remaining_battery <= 100;
}

// ---------------------------------------------------------------------------
// Wire codec

namespace detail {

inline std::optional<double> parse_number(std::string_view tok) {
  if (tok.empty()) return std::nullopt;
  double out = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) return std::nullopt;
  return out;
}

inline void append_number(std::string& out, double x) {
  char buf[64];
  if (x == std::trunc(x) && std::fabs(x) < 9.0e15) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<std::int64_t>(x));
    out.append(buf, ptr);
  } else {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    out.append(buf, ptr);
  }
}

// Splits a comma-separated line into numbers; throws on the first bad token.
inline std::vector<double> parse_csv_numbers(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.empty()) throw Error(ErrorCode::EmptyLine, "empty feature line");
  std::vector<double> values;
  values.reserve(kFeatureCount + 1);
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    const std::string_view tok = line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start);
    const auto x = parse_number(tok);
    if (!x) {
      throw FieldError(ErrorCode::NonNumericField, values.size(), kFeatureCount,
                       "field " + std::to_string(values.size()) + " is not a decimal number");
    }
    values.push_back(*x);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return values;
}

}  // namespace detail

inline FeatureVector parse_feature_line(std::string_view line) {
  const auto values = detail::parse_csv_numbers(line);
  if (values.size() != kFeatureCount) {
    throw FieldError(ErrorCode::WrongFieldCount, values.size(), kFeatureCount,
                     "found " + std::to_string(values.size()) + " fields, expected 32");
  }
  FeatureVector v;
  std::copy(values.begin(), values.end(), v.values.begin());
  return v;
}

// No trailing newline; file writers append LF.
inline std::string emit_feature_line(const FeatureVector& v) {
  std::string out;
  out.reserve(kFeatureCount * 4);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (i) out.push_back(',');
    detail::append_number(out, v.values[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windowed counters

inline constexpr std::array<int, 3> kWindowMinutes = {30, 60, 120};

struct WindowCounters {
  std::array<std::int64_t, 3> displays{};  // per kWindowMinutes entry
  std::array<std::int64_t, 3> clicks{};
  std::int64_t cancel_count = 0;
  int click_last = 0;
  int click_last2 = 0;
  bool is_null = true;  // no retained history for the pair

  bool operator==(const WindowCounters&) const = default;
};

enum class PushResult { Accepted, Flagged, Ignored };

// Incremental per-(user, noti_type) history. A click attaches to the most
// recent retained display; a click with no such display, or on an already
// clicked display, is flagged and dropped. A cancel needs any retained display.
class EventWindow {
 public:
  explicit EventWindow(Timestamp retention = kRetentionHorizonMs) : retention_(retention) {}

  PushResult push(const EventRecord& e) {
    if (e.timestamp <= 0) throw Error(ErrorCode::InvalidEvent, "timestamp must be positive");
    if (e.timestamp < last_) throw Error(ErrorCode::UnsortedHistory, "event precedes previous event");
    last_ = e.timestamp;
    evict(e.timestamp);
    switch (e.kind) {
      case EventKind::AppOpen:
        return PushResult::Ignored;
      case EventKind::Display:
        displays_.push_back({e.timestamp, false});
        accepted_.push_back(e.timestamp);
        return PushResult::Accepted;
      case EventKind::Click:
        if (displays_.empty() || displays_.back().clicked) return flag();
        displays_.back().clicked = true;
        accepted_.push_back(e.timestamp);
        return PushResult::Accepted;
      case EventKind::Cancel:
        if (displays_.empty()) return flag();
        cancels_.push_back(e.timestamp);
        accepted_.push_back(e.timestamp);
        return PushResult::Accepted;
    }
    return PushResult::Ignored;
  }

  WindowCounters counters(Timestamp now) const {
    if (now < last_) throw Error(ErrorCode::EventAfterNow, "query time precedes retained events");
    WindowCounters c;
    const Timestamp horizon = now - retention_;
    auto after = [](Timestamp bound) { return [bound](const auto& x) { return stamp(x) <= bound; }; };
    // Displays are sorted; find the first entry inside each window.
    for (std::size_t w = 0; w < kWindowMinutes.size(); ++w) {
      const Timestamp lo = now - kWindowMinutes[w] * kMinuteMs;
      auto it = std::partition_point(displays_.begin(), displays_.end(), after(lo));
      for (; it != displays_.end(); ++it) {
        ++c.displays[w];
        c.clicks[w] += it->clicked ? 1 : 0;
      }
    }
    auto first_display = std::partition_point(displays_.begin(), displays_.end(), after(horizon));
    const auto retained = std::distance(first_display, displays_.end());
    if (retained >= 1) c.click_last = displays_.end()[-1].clicked ? 1 : 0;
    if (retained >= 2) c.click_last2 = displays_.end()[-2].clicked ? 1 : 0;
    c.cancel_count = std::distance(std::partition_point(cancels_.begin(), cancels_.end(), after(horizon)), cancels_.end());
    c.is_null = std::partition_point(accepted_.begin(), accepted_.end(), after(horizon)) == accepted_.end();
    return c;
  }

  std::size_t flagged() const { return flagged_; }
  Timestamp last_timestamp() const { return last_; }

 private:
  struct Shown {
    Timestamp ts;
    bool clicked;
  };

  static Timestamp stamp(const Shown& s) { return s.ts; }
  static Timestamp stamp(Timestamp t) { return t; }

  PushResult flag() {
    ++flagged_;
    return PushResult::Flagged;
  }

  void evict(Timestamp now) {
    const Timestamp horizon = now - retention_;
    while (!displays_.empty() && displays_.front().ts <= horizon) displays_.pop_front();
    while (!cancels_.empty() && cancels_.front() <= horizon) cancels_.pop_front();
    while (!accepted_.empty() && accepted_.front() <= horizon) accepted_.pop_front();
  }

  Timestamp retention_;
  Timestamp last_ = 0;
  std::size_t flagged_ = 0;
  std::deque<Shown> displays_;
  std::deque<Timestamp> cancels_;
  std::deque<Timestamp> accepted_;
};

// `history` holds one user's events for one notification type.
inline WindowCounters compute_window_counters(std::span<const EventRecord> history, Timestamp now) {
  EventWindow window;
  for (const auto& e : history) {
    if (e.timestamp > now) throw Error(ErrorCode::EventAfterNow, "history contains events after now");
    window.push(e);
  }
  return window.counters(now);
}

inline void write_counters(FeatureVector& v, const WindowCounters& c) {
  v[kNotiDisplay30] = static_cast<double>(c.displays[0]);
  v[kNotiClick30] = static_cast<double>(c.clicks[0]);
  v[kNotiDisplay60] = static_cast<double>(c.displays[1]);
  v[kNotiClick60] = static_cast<double>(c.clicks[1]);
  v[kNotiDisplay120] = static_cast<double>(c.displays[2]);
  v[kNotiClick120] = static_cast<double>(c.clicks[2]);
  v[kNotificationCancelCount] = static_cast<double>(c.cancel_count);
  v[kIsNull] = c.is_null ? 1.0 : 0.0;
  v[kNotiClickLast] = c.click_last;
  v[kNotiClickLast2] = c.click_last2;
}

inline FeatureVector assemble_feature_vector(const DeviceSnapshot& snapshot, const WindowCounters& counters) {
  if (!is_valid(snapshot)) throw Error(ErrorCode::InvalidSnapshot, "device snapshot violates its invariants");
  FeatureVector v;
  const auto slots = snapshot.to_slots();
  std::copy(slots.begin(), slots.end(), v.values.begin());
  write_counters(v, counters);
  return v;
}

// `history` may mix notification types of one user; only `type` events count.
inline FeatureVector build_feature_vector(const DeviceSnapshot& snapshot, std::span<const EventRecord> history,
                                          Timestamp now, NotiType type) {
  EventWindow window;
  for (const auto& e : history) {
    if (e.noti_type != type) continue;
    if (e.timestamp > now) throw Error(ErrorCode::EventAfterNow, "history contains events after now");
    window.push(e);
  }
  return assemble_feature_vector(snapshot, window.counters(now));
}

}  // namespace c3po
