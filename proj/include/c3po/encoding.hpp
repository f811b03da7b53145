#pragma once

// Expansion of the 32-slot raw vector into the fixed-width network input.
// Each feature is encoded as one of:
//   drop     0 slots (removed by screening)
//   bool     1 slot, raw value
//   scalar   1 slot, z-scored value (raw when no stats are supplied)
//   buckets  one-hot over raw-unit edges, edges+1 slots
//   both     scalar slot followed by the one-hot group

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "c3po/error.hpp"
#include "c3po/featurizer.hpp"
#include "c3po/normalization.hpp"

namespace c3po {

inline constexpr int kEncodingFormatVersion = 1;

struct FeatureEncoding {
  enum class Kind { Drop, Bool, Scalar, Buckets, Both };

  Kind kind = Kind::Scalar;
  std::vector<double> edges;  // strictly increasing; Buckets/Both only

  std::size_t width() const {
    switch (kind) {
      case Kind::Drop: return 0;
      case Kind::Bool:
      case Kind::Scalar: return 1;
      case Kind::Buckets: return edges.size() + 1;
      case Kind::Both: return edges.size() + 2;
    }
    return 0;
  }

  bool operator==(const FeatureEncoding&) const = default;
};

using EncodedVector = std::vector<double>;

struct EncodingSpec {
  int version = kEncodingFormatVersion;
  int schema_version = kSchemaVersion;
  std::array<FeatureEncoding, kFeatureCount> features{};

  std::size_t output_dim() const {
    std::size_t n = 0;
    for (const auto& f : features) n += f.width();
    return n;
  }

  std::array<bool, kFeatureCount> mask() const {
    std::array<bool, kFeatureCount> m{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) m[i] = features[i].kind != FeatureEncoding::Kind::Drop;
    return m;
  }

  static EncodingSpec identity() { return EncodingSpec{}; }

  bool operator==(const EncodingSpec&) const = default;
};

// Shipped as data/encoding-80.spec; kept here so the library needs no files.
inline constexpr std::string_view kDefaultEncodingSpecText = R"(# Default 32 -> 80 input encoding.
format=c3po-encoding
version=1
schema_version=1
output_dim=80
remaining_storage=both:500,2000,8000
remaining_ram=both:256,512,1024,2048
remaining_battery=both:15,30,50,80
installed_day_count=both:1,7,30,90
storage=scalar
ram=scalar
is_charging=bool
active_scan_count=scalar
passive_scan_count=scalar
active_clean_count=scalar
passive_clean_count=scalar
active_boost_count=scalar
passive_boost_count=scalar
active_battery_saver_count=scalar
passive_battery_saver_count=scalar
applock_enabled=bool
notification_cleaner_enabled=bool
private_browsing_count=scalar
wifi_test_count=scalar
wifi_boost_count=scalar
notification_display_count=both:1,5,20
notification_click_count=both:1,3,10
noti_display_30=both:1
noti_click_30=both:1
noti_display_60=both:1,2,3
noti_click_60=both:1,2
noti_display_120=both:1,2,4
noti_click_120=both:1,2
notification_cancel_count=both:1,3
is_null=bool
noti_click_last=bool
noti_click_last2=bool
)";

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline int parse_int_field(std::string_view value, std::string_view key) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::InvalidEncodingSpec, "bad integer for " + std::string(key));
  }
  return out;
}

inline FeatureEncoding parse_feature_encoding(std::string_view name, std::string_view value) {
  FeatureEncoding f;
  const auto colon = value.find(':');
  const std::string_view kind = value.substr(0, colon);
  if (kind == "drop") f.kind = FeatureEncoding::Kind::Drop;
  else if (kind == "bool") f.kind = FeatureEncoding::Kind::Bool;
  else if (kind == "scalar") f.kind = FeatureEncoding::Kind::Scalar;
  else if (kind == "buckets") f.kind = FeatureEncoding::Kind::Buckets;
  else if (kind == "both") f.kind = FeatureEncoding::Kind::Both;
  else throw Error(ErrorCode::InvalidEncodingSpec, "unknown kind '" + std::string(kind) + "' for " + std::string(name));

  const bool bucketed = f.kind == FeatureEncoding::Kind::Buckets || f.kind == FeatureEncoding::Kind::Both;
  if (bucketed != (colon != std::string_view::npos)) {
    throw Error(ErrorCode::InvalidEncodingSpec, "edge list required exactly for bucketed kinds: " + std::string(name));
  }
  if (bucketed) {
    try {
      f.edges = parse_csv_numbers(value.substr(colon + 1));
    } catch (const Error&) {
      throw Error(ErrorCode::InvalidEncodingSpec, "bad edge list for " + std::string(name));
    }
    if (!std::is_sorted(f.edges.begin(), f.edges.end()) ||
        std::adjacent_find(f.edges.begin(), f.edges.end()) != f.edges.end()) {
      throw Error(ErrorCode::InvalidEncodingSpec, "edges must be strictly increasing: " + std::string(name));
    }
  }
  return f;
}

}  // namespace detail

inline EncodingSpec parse_encoding_spec(std::string_view text) {
  EncodingSpec spec;
  std::array<bool, kFeatureCount> seen{};
  int declared_dim = -1;
  bool format_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::InvalidEncodingSpec, "expected key=value: " + std::string(line));
    const std::string_view key = detail::trim(line.substr(0, eq));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key == "format") {
      if (value != "c3po-encoding") throw Error(ErrorCode::InvalidEncodingSpec, "unknown format");
      format_seen = true;
    } else if (key == "version") {
      spec.version = detail::parse_int_field(value, key);
      if (spec.version > kEncodingFormatVersion) {
        throw Error(ErrorCode::VersionMismatch, "encoding spec version " + std::to_string(spec.version));
      }
    } else if (key == "schema_version") {
      spec.schema_version = detail::parse_int_field(value, key);
    } else if (key == "output_dim") {
      declared_dim = detail::parse_int_field(value, key);
    } else if (auto idx = feature_index(key)) {
      if (seen[*idx]) throw Error(ErrorCode::InvalidEncodingSpec, "duplicate feature " + std::string(key));
      seen[*idx] = true;
      spec.features[*idx] = detail::parse_feature_encoding(key, value);
    } else {
      throw Error(ErrorCode::InvalidEncodingSpec, "unknown key " + std::string(key));
    }
  }
  if (!format_seen) throw Error(ErrorCode::InvalidEncodingSpec, "missing format line");
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!seen[i]) throw Error(ErrorCode::InvalidEncodingSpec, "missing feature " + std::string(kFeatureNames[i]));
  }
  if (declared_dim >= 0 && static_cast<std::size_t>(declared_dim) != spec.output_dim()) {
    throw Error(ErrorCode::InvalidEncodingSpec, "output_dim " + std::to_string(declared_dim) + " but widths sum to " +
                                                    std::to_string(spec.output_dim()));
  }
  return spec;
}

inline std::string emit_encoding_spec(const EncodingSpec& spec) {
  std::ostringstream out;
  out << "format=c3po-encoding\nversion=" << spec.version << "\nschema_version=" << spec.schema_version
      << "\noutput_dim=" << spec.output_dim() << '\n';
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const auto& f = spec.features[i];
    out << kFeatureNames[i] << '=';
    switch (f.kind) {
      case FeatureEncoding::Kind::Drop: out << "drop"; break;
      case FeatureEncoding::Kind::Bool: out << "bool"; break;
      case FeatureEncoding::Kind::Scalar: out << "scalar"; break;
      case FeatureEncoding::Kind::Buckets: out << "buckets:"; break;
      case FeatureEncoding::Kind::Both: out << "both:"; break;
    }
    std::string edges;
    for (std::size_t e = 0; e < f.edges.size(); ++e) {
      if (e) edges.push_back(',');
      detail::append_number(edges, f.edges[e]);
    }
    out << edges << '\n';
  }
  return out.str();
}

inline EncodingSpec default_encoding_spec() { return parse_encoding_spec(kDefaultEncodingSpecText); }

inline EncodingSpec load_encoding_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_encoding_spec(ss.str());
}

// Screening: features outside `keep` are dropped, the rest keep their encoding.
inline EncodingSpec masked(EncodingSpec spec, const std::array<bool, kFeatureCount>& keep) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!keep[i]) spec.features[i] = FeatureEncoding{FeatureEncoding::Kind::Drop, {}};
  }
  return spec;
}

inline void encode_into(const FeatureVector& v, const EncodingSpec& spec, const NormalizationStats* stats,
                        std::span<double> out) {
  if (v.schema_version != spec.schema_version) {
    throw Error(ErrorCode::SchemaMismatch, "vector schema v" + std::to_string(v.schema_version) + ", spec expects v" +
                                               std::to_string(spec.schema_version));
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const auto& f = spec.features[i];
    const double x = v.values[i];
    switch (f.kind) {
      case FeatureEncoding::Kind::Drop:
        break;
      case FeatureEncoding::Kind::Bool:
        out[k++] = x;
        break;
      case FeatureEncoding::Kind::Scalar:
      case FeatureEncoding::Kind::Buckets:
      case FeatureEncoding::Kind::Both: {
        if (f.kind != FeatureEncoding::Kind::Buckets) out[k++] = stats ? stats->apply(i, x) : x;
        if (f.kind != FeatureEncoding::Kind::Scalar) {
          const auto bucket = static_cast<std::size_t>(std::upper_bound(f.edges.begin(), f.edges.end(), x) - f.edges.begin());
          for (std::size_t b = 0; b <= f.edges.size(); ++b) out[k++] = b == bucket ? 1.0 : 0.0;
        }
        break;
      }
    }
  }
}

inline EncodedVector encode(const FeatureVector& v, const EncodingSpec& spec, const NormalizationStats* stats = nullptr) {
  EncodedVector out(spec.output_dim());
  encode_into(v, spec, stats, out);
  return out;
}

}  // namespace c3po
