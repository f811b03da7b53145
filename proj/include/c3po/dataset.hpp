#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "c3po/error.hpp"
#include "c3po/featurizer.hpp"
#include "c3po/normalization.hpp"

namespace c3po {

struct LabeledExample {
  FeatureVector features;
  int label = 0;  // 1 = clicked
  NotiType noti_type = NotiType::MemoryOverUse;
  Timestamp timestamp = 0;
  std::uint64_t id = 0;  // unique within a pool; used for disjointness

  bool operator==(const LabeledExample&) const = default;
};

using Dataset = std::vector<LabeledExample>;

inline constexpr std::size_t kDefaultTrainSize = 50'000;
inline constexpr std::size_t kDefaultTestSize = 50'000;
inline constexpr std::size_t kTestNegativesPerPositive = 10;

namespace detail {

// Partial Fisher-Yates: k distinct picks from `items`, in draw order.
template <typename T>
std::vector<T> draw_without_replacement(std::vector<T> items, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(k);
  return items;
}

inline void split_by_label(const Dataset& pool, std::vector<std::size_t>& pos, std::vector<std::size_t>& neg,
                           const std::unordered_set<std::uint64_t>* exclude = nullptr) {
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (exclude && exclude->count(pool[i].id)) continue;
    (pool[i].label == 1 ? pos : neg).push_back(i);
  }
}

inline Dataset compose(const Dataset& pool, std::vector<std::size_t> picks, std::mt19937_64& rng) {
  std::shuffle(picks.begin(), picks.end(), rng);
  Dataset out;
  out.reserve(picks.size());
  for (auto i : picks) out.push_back(pool[i]);
  return out;
}

}  // namespace detail

// Undersamples to exactly target_size examples, half of each class
// (odd sizes give the extra example to the negatives).
inline Dataset balance_training_set(const Dataset& pool, std::size_t target_size, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  detail::split_by_label(pool, pos, neg);
  const std::size_t need_pos = target_size / 2;
  const std::size_t need_neg = target_size - need_pos;
  if (pos.size() < need_pos) throw ClassError(1, pos.size(), need_pos);
  if (neg.size() < need_neg) throw ClassError(0, neg.size(), need_neg);
  std::mt19937_64 rng(seed);
  auto picks = detail::draw_without_replacement(std::move(pos), need_pos, rng);
  auto neg_picks = detail::draw_without_replacement(std::move(neg), need_neg, rng);
  picks.insert(picks.end(), neg_picks.begin(), neg_picks.end());
  return detail::compose(pool, std::move(picks), rng);
}

// 1:10 positives to negatives; positives = floor(total / 11), rest negative.
inline Dataset sample_test_set(const Dataset& pool, std::size_t total, std::uint64_t seed,
                               const std::unordered_set<std::uint64_t>& exclude = {}) {
  std::vector<std::size_t> pos, neg;
  detail::split_by_label(pool, pos, neg, &exclude);
  const std::size_t need_pos = total / (kTestNegativesPerPositive + 1);
  const std::size_t need_neg = total - need_pos;
  if (pos.size() < need_pos) throw ClassError(1, pos.size(), need_pos);
  if (neg.size() < need_neg) throw ClassError(0, neg.size(), need_neg);
  std::mt19937_64 rng(seed);
  auto picks = detail::draw_without_replacement(std::move(pos), need_pos, rng);
  auto neg_picks = detail::draw_without_replacement(std::move(neg), need_neg, rng);
  picks.insert(picks.end(), neg_picks.begin(), neg_picks.end());
  return detail::compose(pool, std::move(picks), rng);
}

inline std::unordered_set<std::uint64_t> id_set(const Dataset& d) {
  std::unordered_set<std::uint64_t> ids;
  ids.reserve(d.size());
  for (const auto& e : d) ids.insert(e.id);
  return ids;
}

// Holds out a deterministic `fraction` of `data` (stratified by label).
inline std::pair<Dataset, Dataset> split_validation(const Dataset& data, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  detail::split_by_label(data, pos, neg);
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const auto n_pos = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pos.size())));
  const auto n_neg = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(neg.size())));
  std::vector<bool> held(data.size(), false);
  for (std::size_t i = 0; i < n_pos; ++i) held[pos[i]] = true;
  for (std::size_t i = 0; i < n_neg; ++i) held[neg[i]] = true;
  Dataset train, valid;
  for (std::size_t i = 0; i < data.size(); ++i) (held[i] ? valid : train).push_back(data[i]);
  return {std::move(train), std::move(valid)};
}

// ---------------------------------------------------------------------------
// Normalization

inline NormalizationStats fit_normalization(const Dataset& train) {
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit normalization on an empty dataset");
  NormalizationStats stats;
  const double n = static_cast<double>(train.size());
  for (std::size_t s = 0; s < kFeatureCount; ++s) {
    double sum = 0, lo = train.front().features[s], hi = lo;
    for (const auto& e : train) {
      const double x = e.features[s];
      sum += x;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    const double mean = sum / n;
    double ss = 0;
    for (const auto& e : train) ss += (e.features[s] - mean) * (e.features[s] - mean);
    const double sd = std::sqrt(ss / n);
    stats.constant[s] = lo == hi || !(sd > 0);
    stats.mean[s] = mean;
    stats.stddev[s] = stats.constant[s] ? 1.0 : sd;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Dataset file: "#schema=v1" header, then 32 feature fields + label per row.

inline constexpr std::string_view kDatasetHeader = "#schema=v1";

inline std::string emit_dataset(const Dataset& d) {
  std::string out(kDatasetHeader);
  out.push_back('\n');
  for (const auto& e : d) {
    out += emit_feature_line(e.features);
    out += e.label ? ",1\n" : ",0\n";
  }
  return out;
}

inline Dataset parse_dataset(std::string_view text) {
  Dataset d;
  std::size_t pos = 0, line_no = 0;
  bool header = false;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header) {
      if (line != kDatasetHeader) throw Error(ErrorCode::SchemaMismatch, "dataset header must be #schema=v1");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto values = detail::parse_csv_numbers(line);
    if (values.size() != kFeatureCount + 1) {
      throw FieldError(ErrorCode::WrongFieldCount, values.size(), kFeatureCount + 1,
                       "line " + std::to_string(line_no) + ": expected 33 fields");
    }
    LabeledExample e;
    std::copy(values.begin(), values.end() - 1, e.features.values.begin());
    if (values.back() != 0 && values.back() != 1) {
      throw Error(ErrorCode::InvalidEvent, "line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    e.label = static_cast<int>(values.back());
    e.id = d.size();
    d.push_back(std::move(e));
  }
  if (!header) throw Error(ErrorCode::SchemaMismatch, "missing dataset header");
  return d;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }
inline void save_dataset(const std::string& path, const Dataset& d) { write_file(path, emit_dataset(d)); }

}  // namespace c3po
