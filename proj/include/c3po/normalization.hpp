#pragma once

#include <array>
#include <cmath>

#include "c3po/featurizer.hpp"

namespace c3po {

// Per-slot z-score statistics fitted on a training split. Constant slots keep
// std = 1 and are flagged; they pass through unchanged.
struct NormalizationStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> stddev{};
  std::array<bool, kFeatureCount> constant{};

  static NormalizationStats identity() {
    NormalizationStats s;
    s.stddev.fill(1.0);
    s.constant.fill(true);
    return s;
  }

  double apply(std::size_t slot, double x) const {
    if (constant[slot]) return x;
    return (x - mean[slot]) / stddev[slot];
  }

  bool operator==(const NormalizationStats&) const = default;
};

inline std::array<double, kFeatureCount> apply_normalization(const NormalizationStats& stats, const FeatureVector& v) {
  std::array<double, kFeatureCount> out{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = stats.apply(i, v.values[i]);
  return out;
}

}  // namespace c3po
