#pragma once

// Random-forest screener: bootstrap-bagged Gini trees whose only job is to
// rank raw features by mean decrease in impurity and pick the subset the
// network sees.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "c3po/checksum.hpp"
#include "c3po/dataset.hpp"
#include "c3po/error.hpp"
#include "c3po/featurizer.hpp"

namespace c3po {

struct ForestParams {
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 5;
  int feature_subsample = 6;  // ceil(sqrt(32))
  std::uint64_t seed = 0;
  int threads = 1;  // trees are independent; result does not depend on this
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  std::array<std::int64_t, 2> counts{};  // {negatives, positives} reaching the node

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int max_depth = 0;
  std::array<double, kFeatureCount> impurity_decrease{};  // raw, per feature
  std::size_t bag_size = 0;

  double predict(const FeatureVector& v) const {
    const TreeNode* n = &nodes[0];
    while (!n->is_leaf()) n = &nodes[v[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right];
    return static_cast<double>(n->counts[1]) / static_cast<double>(n->counts[0] + n->counts[1]);
  }

  int depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].is_leaf()) continue;
      d[static_cast<std::size_t>(nodes[i].left)] = d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      best = std::max(best, d[i] + 1);
    }
    return best;
  }

  bool operator==(const DecisionTree&) const = default;
};

struct Forest {
  std::vector<DecisionTree> trees;
  ForestParams params;
  std::vector<std::uint64_t> tree_seeds;

  bool fitted() const { return !trees.empty(); }
  bool operator==(const Forest& o) const { return trees == o.trees && tree_seeds == o.tree_seeds; }
};

struct ImportanceReport {
  std::array<double, kFeatureCount> scores{};
};

namespace detail {

inline double gini(double neg, double pos) {
  const double n = neg + pos;
  if (n <= 0) return 0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ForestParams& params, std::uint64_t seed)
      : data_(data), params_(params), rng_(seed) {}

  DecisionTree build() {
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<std::size_t> bag(data_.size());
    for (auto& i : bag) i = pick(rng_);
    tree_.max_depth = params_.max_depth;
    tree_.bag_size = bag.size();
    root_size_ = static_cast<double>(bag.size());
    grow(bag, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0;
    double decrease = 0;
  };

  int grow(std::vector<std::size_t>& idx, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::array<std::int64_t, 2> counts{};
    for (auto i : idx) ++counts[static_cast<std::size_t>(data_[i].label)];
    tree_.nodes[static_cast<std::size_t>(id)].counts = counts;

    const bool pure = counts[0] == 0 || counts[1] == 0;
    const auto n = static_cast<std::int64_t>(idx.size());
    if (pure || depth >= params_.max_depth || n < 2 * params_.min_leaf) return id;

    const Split best = find_split(idx, counts);
    if (best.feature < 0) return id;

    tree_.impurity_decrease[static_cast<std::size_t>(best.feature)] += best.decrease / root_size_;
    std::vector<std::size_t> left, right;
    for (auto i : idx) (data_[i].features[static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
    std::vector<std::size_t>().swap(idx);
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  Split find_split(std::vector<std::size_t>& idx, const std::array<std::int64_t, 2>& counts) {
    std::array<int, kFeatureCount> features;
    std::iota(features.begin(), features.end(), 0);
    for (int k = 0; k < params_.feature_subsample; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(kFeatureCount) - 1);
      std::swap(features[static_cast<std::size_t>(k)], features[static_cast<std::size_t>(pick(rng_))]);
    }
    const double n = static_cast<double>(idx.size());
    const double parent = n * gini(static_cast<double>(counts[0]), static_cast<double>(counts[1]));
    Split best;
    for (int k = 0; k < params_.feature_subsample; ++k) {
      const auto f = static_cast<std::size_t>(features[static_cast<std::size_t>(k)]);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return data_[a].features[f] < data_[b].features[f];
      });
      double left_neg = 0, left_pos = 0;
      for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
        (data_[idx[j]].label ? left_pos : left_neg) += 1;
        const double x = data_[idx[j]].features[f];
        const double next = data_[idx[j + 1]].features[f];
        if (x == next) continue;
        const double n_left = static_cast<double>(j + 1);
        const double n_right = n - n_left;
        if (n_left < params_.min_leaf || n_right < params_.min_leaf) continue;
        const double right_neg = static_cast<double>(counts[0]) - left_neg;
        const double right_pos = static_cast<double>(counts[1]) - left_pos;
        const double decrease = parent - n_left * gini(left_neg, left_pos) - n_right * gini(right_neg, right_pos);
        if (decrease > best.decrease + 1e-12) {
          best.feature = static_cast<int>(f);
          best.threshold = x + (next - x) / 2;
          best.decrease = decrease;
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  const ForestParams& params_;
  std::mt19937_64 rng_;
  DecisionTree tree_;
  double root_size_ = 1;
};

}  // namespace detail

inline Forest fit_forest(const Dataset& train, const ForestParams& params) {
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit a forest on an empty dataset");
  if (params.n_trees < 1 || params.max_depth < 0 || params.min_leaf < 1 || params.feature_subsample < 1 ||
      params.feature_subsample > static_cast<int>(kFeatureCount) || params.threads < 1) {
    throw Error(ErrorCode::InvalidParams, "forest parameters out of range");
  }
  Forest forest;
  forest.params = params;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) forest.tree_seeds.push_back(splitmix64(params.seed * 1000003ULL + t));

  auto fit_range = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t t = begin; t < forest.trees.size(); t += stride) {
      forest.trees[t] = detail::TreeBuilder(train, params, forest.tree_seeds[t]).build();
    }
  };
  const auto workers = static_cast<std::size_t>(std::min(params.threads, params.n_trees));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(fit_range, w, workers);
  fit_range(0, workers);
  for (auto& th : pool) th.join();
  return forest;
}

inline double predict_proba(const Forest& forest, const FeatureVector& v) {
  if (!forest.fitted()) throw Error(ErrorCode::UnfittedForest, "forest has no trees");
  double sum = 0;
  for (const auto& t : forest.trees) sum += t.predict(v);
  return sum / static_cast<double>(forest.trees.size());
}

inline ImportanceReport feature_importances(const Forest& forest) {
  if (!forest.fitted()) throw Error(ErrorCode::UnfittedForest, "forest has no trees");
  ImportanceReport r;
  for (const auto& t : forest.trees) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) r.scores[f] += t.impurity_decrease[f];
  }
  const double total = std::accumulate(r.scores.begin(), r.scores.end(), 0.0);
  if (total > 0) {
    for (auto& s : r.scores) s /= total;
  }
  return r;
}

// Feature indices by descending score; ties go to the lower index.
inline std::array<std::size_t, kFeatureCount> importance_order(const ImportanceReport& report) {
  std::array<std::size_t, kFeatureCount> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return report.scores[a] > report.scores[b]; });
  return order;
}

inline std::array<bool, kFeatureCount> select_top_k(const ImportanceReport& report, int k) {
  if (k < 1 || k > static_cast<int>(kFeatureCount)) throw Error(ErrorCode::InvalidK, "k must be in [1, 32]");
  std::array<bool, kFeatureCount> mask{};
  const auto order = importance_order(report);
  for (int i = 0; i < k; ++i) mask[order[static_cast<std::size_t>(i)]] = true;
  return mask;
}

// "feature_name<TAB>score" lines, highest score first.
inline std::string emit_importance_report(const ImportanceReport& report) {
  std::ostringstream out;
  out.precision(12);
  for (auto f : importance_order(report)) out << kFeatureNames[f] << '\t' << std::fixed << report.scores[f] << '\n';
  return out.str();
}

}  // namespace c3po
