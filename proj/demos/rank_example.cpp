// Trains a small model on three simulated days, ranks and throttles three
// candidate pop-ups for one simulated device, and shows how feedback moves a
// threshold.

#include <algorithm>
#include <cstdio>

#include "c3po/ranker.hpp"
#include "c3po/simulator.hpp"

int main() {
  using namespace c3po;
  PopulationSpec spec;
  spec.n_users = 3000;
  spec.new_users_per_day = 0;
  SimOptions opts;
  opts.collect_examples = true;
  const auto pool = simulate_period(generate_population(spec), Policy::Random, 3, 3, nullptr, opts).examples;

  const auto [train, valid] = split_validation(balance_training_set(pool, 6000, 1), 0.1, 1);
  const auto enc = default_encoding_spec();
  auto model = init_model(kDefaultLayerDims, 1);
  model.encoding = enc;
  model.normalization = fit_normalization(train);
  TrainConfig tc;
  tc.epochs = 10;
  const auto fitted = fit(model, encode_dataset(train, enc, model.normalization), encode_dataset(valid, enc, model.normalization), tc);
  std::printf("trained on %zu balanced examples, best epoch %zu\n", train.size(), fitted.best_epoch + 1);

  // The wire format is 32 comma-separated numbers in slot order.
  const auto clicked = std::find_if(pool.begin(), pool.end(), [](const auto& e) { return e.label == 1; });
  const auto features = parse_feature_line(emit_feature_line(clicked->features));
  std::printf("wire line: %s\n", emit_feature_line(features).c_str());
  std::vector<Candidate> candidates;
  for (NotiType t : kAllNotiTypes) {
    auto v = features;
    v.values[kNotiDisplay120] = static_cast<double>(t) - 1;  // a different recent-display count per type
    candidates.push_back({t, v});
  }

  ThrottleConfig cfg;
  cfg.initial_threshold = 0.3;
  UserPolicy policy;
  Timestamp now = kSimEpochMs;
  for (const auto& c : throttle(score_candidates(fitted.model, candidates), policy, now, cfg)) {
    std::printf("%s  score %.6f  %-8s %s\n", to_string(c.noti_type).c_str(), c.score, to_string(c.decision).data(),
                to_string(c.reason).data());
  }

  for (Outcome o : {Outcome::Ignored, Outcome::Ignored, Outcome::Clicked}) {
    now += kMinuteMs;
    record_feedback(policy, NotiType::MemoryOverUse, o, now, cfg);
    std::printf("after %-6s noti1 threshold %.4f\n", o == Outcome::Clicked ? "click" : "ignore",
                policy.at(NotiType::MemoryOverUse).score_threshold);
  }
}
