#pragma once

// Feed-forward click-probability network: relu hidden layers, sigmoid output,
// binary cross-entropy loss, mini-batch training with SGD / momentum / Adam.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "c3po/dataset.hpp"
#include "c3po/encoding.hpp"
#include "c3po/error.hpp"
#include "c3po/normalization.hpp"

namespace c3po {

inline const std::vector<std::size_t> kDefaultLayerDims = {80, 40, 20, 10, 5, 1};
inline constexpr double kLossEpsilon = 1e-12;

struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> biases;   // out

  double& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
  double w(std::size_t row, std::size_t col) const { return weights[row * in + col]; }
  bool operator==(const Layer&) const = default;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  std::vector<double> loss_curve;  // mean training loss per epoch
  bool operator==(const TrainingMetadata&) const = default;
};

struct ModelSnapshot {
  std::vector<std::size_t> layer_dims;
  std::vector<Layer> layers;
  EncodingSpec encoding = default_encoding_spec();
  NormalizationStats normalization = NormalizationStats::identity();
  int schema_version = kSchemaVersion;
  TrainingMetadata training;

  std::size_t input_dim() const { return layer_dims.front(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.biases.size();
    return n;
  }

  bool operator==(const ModelSnapshot&) const = default;
};

// Gradients share the model's layer shapes.
using Gradients = std::vector<Layer>;

inline ModelSnapshot init_model(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  if (dims.size() < 2 || dims.back() != 1 || std::find(dims.begin(), dims.end(), 0u) != dims.end()) {
    throw Error(ErrorCode::InvalidDims, "layer dims need >= 2 entries, all >= 1, ending in 1");
  }
  ModelSnapshot m;
  m.layer_dims = dims;
  if (dims.front() != m.encoding.output_dim()) m.encoding = EncodingSpec::identity();
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer l;
    l.in = dims[i];
    l.out = dims[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    l.weights.resize(l.in * l.out);
    for (auto& w : l.weights) w = u(rng);
    l.biases.assign(l.out, 0.0);
    m.layers.push_back(std::move(l));
  }
  m.training.seed = seed;
  return m;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double relu(double z) { return z > 0 ? z : 0.0; }

inline double loss(double pred, int label) {
  const double p = std::clamp(pred, kLossEpsilon, 1.0 - kLossEpsilon);
  return label ? -std::log(p) : -std::log(1.0 - p);
}

namespace detail {

// Keeps the output strictly inside (0, 1) even when the logit saturates.
inline double open_unit(double p) {
  constexpr double tiny = std::numeric_limits<double>::denorm_min();
  return std::clamp(p, tiny, std::nextafter(1.0, 0.0));
}

inline void check_input(const ModelSnapshot& model, std::size_t n) {
  if (n != model.input_dim()) {
    throw Error(ErrorCode::DimMismatch, "input has " + std::to_string(n) + " values, model expects " +
                                            std::to_string(model.input_dim()));
  }
}

// Forward pass retaining every layer's pre-activation; acts[0] is the input.
inline double forward_trace(const ModelSnapshot& model, std::span<const double> x, std::vector<std::vector<double>>& acts,
                            std::vector<std::vector<double>>& pre) {
  const std::size_t L = model.layers.size();
  acts.resize(L + 1);
  pre.resize(L);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t li = 0; li < L; ++li) {
    const Layer& l = model.layers[li];
    pre[li].resize(l.out);
    acts[li + 1].resize(l.out);
    const double* in = acts[li].data();
    for (std::size_t r = 0; r < l.out; ++r) {
      const double* row = l.weights.data() + r * l.in;
      double z = l.biases[r];
      for (std::size_t c = 0; c < l.in; ++c) z += row[c] * in[c];
      pre[li][r] = z;
      acts[li + 1][r] = li + 1 == L ? sigmoid(z) : relu(z);
    }
  }
  return acts[L][0];
}

}  // namespace detail

inline double forward(const ModelSnapshot& model, std::span<const double> x) {
  detail::check_input(model, x.size());
  thread_local std::vector<double> a, b;
  a.assign(x.begin(), x.end());
  double z = 0;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& l = model.layers[li];
    const bool last = li + 1 == model.layers.size();
    b.resize(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      const double* row = l.weights.data() + r * l.in;
      double s = l.biases[r];
      for (std::size_t c = 0; c < l.in; ++c) s += row[c] * a[c];
      b[r] = last ? s : relu(s);
      z = s;
    }
    std::swap(a, b);
  }
  return detail::open_unit(sigmoid(z));
}

inline Gradients zero_gradients(const ModelSnapshot& model) {
  Gradients g = model.layers;
  for (auto& l : g) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.biases.begin(), l.biases.end(), 0.0);
  }
  return g;
}

struct EncodedDataset {
  std::size_t dim = 0;
  std::vector<double> x;  // row-major, size() * dim
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }

  void push_back(std::span<const double> features, int label) {
    if (dim == 0 && y.empty()) dim = features.size();
    if (features.size() != dim) throw Error(ErrorCode::DimMismatch, "encoded rows must share one width");
    x.insert(x.end(), features.begin(), features.end());
    y.push_back(label);
  }
};

// Accumulates (1/scale) * d(loss)/d(params) for one example into `grads`;
// returns the example's loss.
inline double accumulate_gradient(const ModelSnapshot& model, std::span<const double> x, int label, double scale,
                                  Gradients& grads) {
  thread_local std::vector<std::vector<double>> acts, pre;
  thread_local std::vector<double> delta, next;
  const double p = detail::forward_trace(model, x, acts, pre);
  const std::size_t L = model.layers.size();
  // d loss / d logit; zero where the loss clamp is active.
  const bool clamped = p < kLossEpsilon || p > 1.0 - kLossEpsilon;
  delta.assign(1, clamped ? 0.0 : (p - label) / scale);
  for (std::size_t li = L; li-- > 0;) {
    const Layer& l = model.layers[li];
    Layer& g = grads[li];
    const double* in = acts[li].data();
    for (std::size_t r = 0; r < l.out; ++r) {
      const double d = delta[r];
      if (d == 0) continue;
      g.biases[r] += d;
      double* grow = g.weights.data() + r * l.in;
      for (std::size_t c = 0; c < l.in; ++c) grow[c] += d * in[c];
    }
    if (li == 0) break;
    next.assign(l.in, 0.0);
    for (std::size_t r = 0; r < l.out; ++r) {
      const double d = delta[r];
      if (d == 0) continue;
      const double* row = l.weights.data() + r * l.in;
      for (std::size_t c = 0; c < l.in; ++c) next[c] += row[c] * d;
    }
    const auto& z = pre[li - 1];
    for (std::size_t c = 0; c < l.in; ++c) next[c] = z[c] > 0 ? next[c] : 0.0;
    std::swap(delta, next);
  }
  return loss(p, label);
}

// Exact gradient of the mean batch loss (relu'(0) = 0).
inline Gradients backward(const ModelSnapshot& model, const EncodedDataset& batch) {
  if (batch.size() == 0) throw Error(ErrorCode::EmptyDataset, "empty batch");
  detail::check_input(model, batch.dim);
  Gradients g = zero_gradients(model);
  const double n = static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) accumulate_gradient(model, batch.row(i), batch.y[i], n, g);
  return g;
}

inline double mean_loss(const ModelSnapshot& model, const EncodedDataset& data) {
  if (data.size() == 0) return 0.0;
  double sum = 0;
  for (std::size_t i = 0; i < data.size(); ++i) sum += loss(forward(model, data.row(i)), data.y[i]);
  return sum / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training

enum class Optimizer { SGD, Momentum, Adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::uint32_t epochs = 30;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;
  std::uint32_t patience = 5;  // epochs without validation improvement
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct FitResult {
  ModelSnapshot model;  // best validation-loss snapshot
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  std::size_t best_epoch = 0;
};

namespace detail {

class OptimizerState {
 public:
  OptimizerState(const ModelSnapshot& m, const TrainConfig& cfg) : cfg_(cfg), m1_(zero_gradients(m)), m2_(zero_gradients(m)) {}

  void step(ModelSnapshot& model, const Gradients& g) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      update(model.layers[li].weights, g[li].weights, m1_[li].weights, m2_[li].weights, bc1, bc2);
      update(model.layers[li].biases, g[li].biases, m1_[li].biases, m2_[li].biases, bc1, bc2);
    }
  }

 private:
  void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
              double bc1, double bc2) const {
    const double lr = cfg_.learning_rate;
    for (std::size_t i = 0; i < p.size(); ++i) {
      switch (cfg_.optimizer) {
        case Optimizer::SGD:
          p[i] -= lr * g[i];
          break;
        case Optimizer::Momentum:
          m[i] = cfg_.momentum * m[i] + g[i];
          p[i] -= lr * m[i];
          break;
        case Optimizer::Adam:
          m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
          v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
          p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_epsilon);
          break;
      }
    }
  }

  const TrainConfig& cfg_;
  Gradients m1_, m2_;
  std::uint64_t t_ = 0;
};

}  // namespace detail

inline FitResult fit(ModelSnapshot model, const EncodedDataset& train, const EncodedDataset& valid,
                     const TrainConfig& config) {
  if (train.size() == 0) throw Error(ErrorCode::EmptyDataset, "empty training set");
  if (!(config.learning_rate >= 0) || config.batch_size < 1 || config.epochs < 1) {
    throw Error(ErrorCode::InvalidParams, "learning_rate >= 0, batch_size >= 1 and epochs >= 1 required");
  }
  detail::check_input(model, train.dim);
  if (valid.size()) detail::check_input(model, valid.dim);

  std::mt19937_64 rng(config.seed);
  detail::OptimizerState opt(model, config);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  result.model = model;
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t stale = 0;
  Gradients g = zero_gradients(model);

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (auto& l : g) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.biases.begin(), l.biases.end(), 0.0);
      }
      const double n = static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        epoch_loss += accumulate_gradient(model, train.row(order[k]), train.y[order[k]], n, g);
      }
      opt.step(model, g);
    }
    epoch_loss /= static_cast<double>(train.size());
    if (!std::isfinite(epoch_loss)) throw Error(ErrorCode::DivergedLoss, "training loss became non-finite");
    // The loss clamp can hide blown-up weights, so check them directly.
    for (const auto& l : model.layers) {
      const auto finite = [](double x) { return std::isfinite(x); };
      if (!std::all_of(l.weights.begin(), l.weights.end(), finite) || !std::all_of(l.biases.begin(), l.biases.end(), finite)) {
        throw Error(ErrorCode::DivergedLoss, "parameters became non-finite");
      }
    }
    result.train_loss.push_back(epoch_loss);
    const double v = valid.size() ? mean_loss(model, valid) : epoch_loss;
    if (!std::isfinite(v)) throw Error(ErrorCode::DivergedLoss, "validation loss became non-finite");
    result.valid_loss.push_back(v);
    if (v < best) {
      best = v;
      result.best_epoch = epoch;
      result.model = model;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  result.model.training.seed = config.seed;
  result.model.training.epochs = static_cast<std::uint32_t>(result.train_loss.size());
  result.model.training.loss_curve = result.train_loss;
  return result;
}

// Raw feature vector -> click probability via the model's own encoding.
inline double score(const ModelSnapshot& model, const FeatureVector& v) {
  thread_local EncodedVector x;
  x.resize(model.encoding.output_dim());
  encode_into(v, model.encoding, &model.normalization, x);
  return forward(model, x);
}

inline EncodedDataset encode_dataset(const Dataset& data, const EncodingSpec& spec, const NormalizationStats& stats) {
  EncodedDataset out;
  out.dim = spec.output_dim();
  out.x.resize(data.size() * out.dim);
  out.y.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    encode_into(data[i].features, spec, &stats, std::span<double>(out.x.data() + i * out.dim, out.dim));
    out.y.push_back(data[i].label);
  }
  return out;
}

}  // namespace c3po
