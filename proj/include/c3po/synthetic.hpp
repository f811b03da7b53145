#pragma once

// Planted-signal datasets: a known subset of slots drives a logistic label,
// every other slot is independent noise.

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "c3po/dataset.hpp"

namespace c3po {

struct PlantedSpec {
  std::vector<std::size_t> informative = {0, 5, 11, 20, 27};
  double weight = 1.5;  // logit weight on each informative slot
  double bias = 0.0;
  std::size_t n = 5000;
  std::uint64_t seed = 0;
};

struct PlantedData {
  Dataset data;
  std::vector<double> truth;  // ground-truth click probability per example
};

inline PlantedData planted_logistic_dataset(const PlantedSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlantedData out;
  out.data.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    LabeledExample e;
    for (auto& x : e.features.values) x = noise(rng);
    double z = spec.bias;
    for (auto slot : spec.informative) z += spec.weight * e.features[slot];
    const double p = 1.0 / (1.0 + std::exp(-z));
    e.label = u(rng) < p ? 1 : 0;
    e.id = i;
    out.truth.push_back(p);
    out.data.push_back(std::move(e));
  }
  return out;
}

}  // namespace c3po
