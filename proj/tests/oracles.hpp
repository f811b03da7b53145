#pragma once

// Independent reference implementations used only by tests. They recompute
// results the slow, obvious way and share no code paths with the library
// beyond plain data types.

#include <cmath>
#include <random>
#include <vector>

#include "c3po/featurizer.hpp"
#include "c3po/mlp.hpp"

namespace c3po::oracle {

// Window counters by filtering the full list once per quantity. Click and
// cancel validity is decided by scanning backwards over the raw list.
inline WindowCounters brute_force_counters(const std::vector<EventRecord>& h, Timestamp now,
                                           Timestamp horizon = kRetentionHorizonMs) {
  const std::size_t n = h.size();
  std::vector<bool> valid(n, false), clicked(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = h[i];
    if (e.kind == EventKind::Display) {
      valid[i] = true;
    } else if (e.kind == EventKind::Click) {
      long latest = -1;
      for (long j = static_cast<long>(i) - 1; j >= 0; --j) {
        if (h[static_cast<std::size_t>(j)].kind == EventKind::Display) {
          latest = j;
          break;
        }
      }
      if (latest >= 0 && h[static_cast<std::size_t>(latest)].timestamp > e.timestamp - horizon &&
          !clicked[static_cast<std::size_t>(latest)]) {
        clicked[static_cast<std::size_t>(latest)] = true;
        valid[i] = true;
      }
    } else if (e.kind == EventKind::Cancel) {
      for (std::size_t j = 0; j < i; ++j) {
        if (h[j].kind == EventKind::Display && h[j].timestamp > e.timestamp - horizon) valid[i] = true;
      }
    }
  }

  WindowCounters c;
  const int windows[3] = {30, 60, 120};
  for (int w = 0; w < 3; ++w) {
    for (std::size_t i = 0; i < n; ++i) {
      if (h[i].kind == EventKind::Display && h[i].timestamp > now - windows[w] * 60'000LL) {
        c.displays[static_cast<std::size_t>(w)] += 1;
        if (clicked[i]) c.clicks[static_cast<std::size_t>(w)] += 1;
      }
    }
  }
  std::vector<std::size_t> retained_displays;
  c.is_null = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (h[i].timestamp <= now - horizon) continue;
    if (valid[i]) c.is_null = false;
    if (h[i].kind == EventKind::Cancel && valid[i]) c.cancel_count += 1;
    if (h[i].kind == EventKind::Display) retained_displays.push_back(i);
  }
  const auto r = retained_displays.size();
  if (r >= 1) c.click_last = clicked[retained_displays[r - 1]] ? 1 : 0;
  if (r >= 2) c.click_last2 = clicked[retained_displays[r - 2]] ? 1 : 0;
  return c;
}

// Random sorted stream for one (user, type) pair, dense enough to straddle
// every window boundary, with occasional day-long gaps.
inline std::vector<EventRecord> random_stream(std::mt19937_64& rng, Timestamp& now) {
  std::uniform_int_distribution<int> len(0, 40);
  std::uniform_int_distribution<int> kind(0, 9);
  std::exponential_distribution<double> gap(1.0 / (12.0 * 60'000));
  std::bernoulli_distribution big_gap(0.03), same_time(0.1);
  std::vector<EventRecord> out;
  Timestamp t = 1'506'211'200'000 + static_cast<Timestamp>(rng() % 1'000'000);
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    if (!same_time(rng)) t += static_cast<Timestamp>(gap(rng)) + (big_gap(rng) ? kDayMs : 0);
    const int k = kind(rng);
    const EventKind ek = k < 5 ? EventKind::Display : k < 8 ? EventKind::Click : k < 9 ? EventKind::Cancel : EventKind::AppOpen;
    out.push_back({"u", NotiType::MemoryOverUse, ek, t});
  }
  now = t + static_cast<Timestamp>(std::uniform_int_distribution<int>(0, 3 * 60)(rng)) * 60'000;
  return out;
}

// Straight-line forward pass in long double, written without the library's
// layer loop helpers.
inline long double forward_ld(const ModelSnapshot& m, const std::vector<double>& x) {
  std::vector<long double> h(x.begin(), x.end());
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const auto& l = m.layers[li];
    std::vector<long double> z(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      long double s = l.biases[r];
      for (std::size_t c = 0; c < l.in; ++c) s += static_cast<long double>(l.weights[r * l.in + c]) * h[c];
      z[r] = s;
    }
    if (li + 1 == m.layers.size()) return 1.0L / (1.0L + std::exp(-z[0]));
    for (auto& v : z) v = v > 0 ? v : 0;
    h = std::move(z);
  }
  return 0;
}

inline long double batch_loss_ld(const ModelSnapshot& m, const std::vector<std::vector<double>>& xs,
                                 const std::vector<int>& ys) {
  long double sum = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const long double p = forward_ld(m, xs[i]);
    sum += ys[i] ? -std::log(p) : -std::log(1.0L - p);
  }
  return sum / static_cast<long double>(xs.size());
}

// Smallest |pre-activation| over all hidden units for input x.
inline double min_hidden_margin(const ModelSnapshot& m, const std::vector<double>& x) {
  std::vector<double> h = x;
  double margin = INFINITY;
  for (std::size_t li = 0; li + 1 < m.layers.size(); ++li) {
    const auto& l = m.layers[li];
    std::vector<double> z(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      double s = l.biases[r];
      for (std::size_t c = 0; c < l.in; ++c) s += l.weights[r * l.in + c] * h[c];
      margin = std::min(margin, std::fabs(s));
      z[r] = s > 0 ? s : 0;
    }
    h = std::move(z);
  }
  return margin;
}

// Central-difference gradient of the mean batch loss w.r.t. every parameter,
// in layer order (weights then biases).
inline std::vector<double> finite_difference_gradient(ModelSnapshot m, const std::vector<std::vector<double>>& xs,
                                                      const std::vector<int>& ys, double step) {
  std::vector<double> out;
  auto probe = [&](double& p) {
    const double saved = p;
    const double hi = saved + step, lo = saved - step;
    p = hi;
    const long double up = batch_loss_ld(m, xs, ys);
    p = lo;
    const long double down = batch_loss_ld(m, xs, ys);
    p = saved;
    out.push_back(static_cast<double>((up - down) / (static_cast<long double>(hi) - lo)));
  };
  for (auto& l : m.layers) {
    for (auto& w : l.weights) probe(w);
    for (auto& b : l.biases) probe(b);
  }
  return out;
}

}  // namespace c3po::oracle
