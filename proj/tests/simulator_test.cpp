#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "c3po/simulator.hpp"

namespace c3po {
namespace {

PopulationSpec small_spec(std::size_t users = 400, std::uint64_t seed = 1) {
  PopulationSpec s;
  s.n_users = users;
  s.new_users_per_day = users / 40;
  s.seed = seed;
  return s;
}

TEST(Population, EmptyWhenNoUsers) {
  PopulationSpec s;
  s.n_users = 0;
  s.new_users_per_day = 0;
  EXPECT_TRUE(generate_population(s).users.empty());
}

TEST(Population, DeterministicPerSeed) {
  const auto a = generate_population(small_spec(200, 4));
  const auto b = generate_population(small_spec(200, 4));
  const auto c = generate_population(small_spec(200, 5));
  ASSERT_EQ(a.users.size(), b.users.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.users.size(); ++i) {
    EXPECT_EQ(a.users[i].engagement, b.users[i].engagement);
    EXPECT_EQ(a.users[i].country, b.users[i].country);
    any_diff = any_diff || a.users[i].engagement != c.users[i].engagement;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Population, CohortsJoinOnTheirDay) {
  const auto pop = generate_population(small_spec(400));
  std::map<int, int> per_day;
  for (const auto& u : pop.users) per_day[u.join_day >= 0 ? u.join_day : -1] += 1;
  EXPECT_EQ(per_day[-1], 400);
  for (int d = 0; d < 14; ++d) EXPECT_EQ(per_day[d], 10);
}

TEST(Population, InvalidSpecs) {
  auto expect_invalid = [](PopulationSpec s) {
    try {
      generate_population(s);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
    }
  };
  auto s = small_spec();
  s.countries[0].share = 0.9;
  expect_invalid(s);
  s = small_spec();
  s.activity[3] += 0.1;
  expect_invalid(s);
  s = small_spec();
  s.offer_probability = 1.5;
  expect_invalid(s);
  s = small_spec();
  s.annoyance = -1;
  expect_invalid(s);
}

TEST(Population, DefaultActivityCurveHasThreeBands) {
  const auto c = default_activity_curve();
  EXPECT_NEAR(std::accumulate(c.begin(), c.end(), 0.0), 1.0, 1e-12);
  EXPECT_LT(c[4], c[10]);
  EXPECT_LT(c[10], c[21]);
  EXPECT_EQ(c[2], c[7]);
}

TEST(Snapshot, AlwaysValid) {
  const auto pop = generate_population(small_spec(100));
  for (std::size_t u = 0; u < pop.users.size(); ++u) {
    if (pop.users[u].join_day > 3) continue;
    for (int h = 0; h < 24; h += 5) {
      const auto d = simulate_snapshot(pop, u, 3, h, 9);
      EXPECT_TRUE(is_valid(d));
      EXPECT_EQ(d.installed_day_count, 3 - pop.users[u].join_day);
    }
  }
}

TEST(Simulate, RandomPolicyCtrNearTenPercent) {
  PopulationSpec spec;
  const auto r = simulate_period(generate_population(spec), Policy::Random, 7, 0).report;
  EXPECT_NEAR(r.total(0, 7).ctr(), 0.10, 0.015);
}

TEST(Simulate, ZeroDaysIsEmpty) {
  const auto r = simulate_period(generate_population(small_spec()), Policy::Random, 0, 0).report;
  EXPECT_TRUE(r.cells.empty());
  EXPECT_TRUE(r.retention.empty());
  EXPECT_EQ(r.total(0, 10).displays, 0u);
}

TEST(Simulate, ModelPolicyNeedsModel) {
  try {
    simulate_period(generate_population(small_spec()), Policy::ModelRanker, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingModel);
  }
}

TEST(Simulate, AlwaysShowDisplaysEveryOffer) {
  SimOptions o;
  o.collect_examples = true;
  const auto r = simulate_period(generate_population(small_spec()), Policy::AlwaysShow, 3, 2, nullptr, o);
  for (const auto& c : r.report.cells) EXPECT_EQ(c.displays, c.offers);
  // CTR equals the mean ground-truth probability up to Bernoulli noise.
  const double mean_truth = std::accumulate(r.truth.begin(), r.truth.end(), 0.0) / static_cast<double>(r.truth.size());
  const auto total = r.report.total(0, 3);
  const double se = std::sqrt(mean_truth * (1 - mean_truth) / static_cast<double>(total.displays));
  EXPECT_NEAR(total.ctr(), mean_truth, 4 * se);
}

TEST(Simulate, ConservationInEveryCell) {
  const auto m = init_model(kDefaultLayerDims, 3);
  for (Policy p : {Policy::AlwaysShow, Policy::Random, Policy::ModelRanker}) {
    const auto r = simulate_period(generate_population(small_spec()), p, 4, 1, &m).report;
    for (const auto& c : r.cells) {
      EXPECT_LE(c.clicks, c.displays);
      EXPECT_LE(c.displays, c.offers);
    }
    for (const auto& c : r.retention) {
      EXPECT_GE(c.rate(), 0.0);
      EXPECT_LE(c.rate(), 1.0);
    }
  }
}

TEST(Simulate, ModelPolicyShowsAtMostOnePerUserHour) {
  const auto m = init_model(kDefaultLayerDims, 3);
  SimOptions o;
  o.collect_log = true;
  const auto r = simulate_period(generate_population(small_spec(200)), Policy::ModelRanker, 2, 1, &m, o);
  std::map<std::pair<UserId, Timestamp>, int> shows;
  for (const auto& e : r.log.events) {
    if (e.kind == EventKind::Display) shows[{e.user_id, e.timestamp / kHourMs}] += 1;
  }
  for (const auto& [k, n] : shows) EXPECT_EQ(n, 1);
}

TEST(Simulate, DeterministicPerSeed) {
  const auto pop = generate_population(small_spec());
  const auto a = simulate_period(pop, Policy::Random, 3, 5).report;
  const auto b = simulate_period(pop, Policy::Random, 3, 5).report;
  const auto c = simulate_period(pop, Policy::Random, 3, 6).report;
  EXPECT_EQ(a.cells, b.cells);
  EXPECT_NE(a.cells, c.cells);
}

TEST(Simulate, LegacyDaysUseRandomPolicy) {
  const auto pop = generate_population(small_spec());
  SimOptions o;
  o.legacy_days = 2;
  const auto a = simulate_period(pop, Policy::AlwaysShow, 3, 5, nullptr, o).report;
  const auto b = simulate_period(pop, Policy::Random, 3, 5).report;
  EXPECT_EQ(a.total(0, 2), b.total(0, 2));
  EXPECT_GT(a.total(2, 3).displays, b.total(2, 3).displays);
}

TEST(Simulate, FeaturizingTheLogReproducesOnlineExamples) {
  const auto m = init_model(kDefaultLayerDims, 8);
  SimOptions o;
  o.collect_log = true;
  o.collect_examples = true;
  o.legacy_days = 1;
  const auto r = simulate_period(generate_population(small_spec(300)), Policy::ModelRanker, 3, 3, &m, o);
  const auto replay = featurize_log(r.log);
  ASSERT_EQ(replay.size(), r.examples.size());
  for (std::size_t i = 0; i < replay.size(); ++i) ASSERT_EQ(replay[i], r.examples[i]) << i;
}

TEST(Simulate, AnnoyanceNeverRaisesRetention) {
  for (Policy p : {Policy::AlwaysShow, Policy::Random}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      double previous = 2;
      for (double a : {0.0, 0.1, 0.25, 0.5, 1.0, 2.0}) {
        auto spec = small_spec(600, seed);
        spec.annoyance = a;
        const double r = simulate_period(generate_population(spec), p, 10, seed).report.pooled_retention();
        EXPECT_LE(r, previous) << to_string(p) << " seed " << seed << " annoyance " << a;
        previous = r;
      }
    }
  }
}

TEST(Retention, LogAgreesWithReport) {
  SimOptions o;
  o.collect_log = true;
  const auto r = simulate_period(generate_population(small_spec(400)), Policy::Random, 10, 1, nullptr, o);
  ASSERT_FALSE(r.report.retention.empty());
  for (const auto& c : r.report.retention) EXPECT_DOUBLE_EQ(retention_7day(r.log, c.cohort_day), c.rate());
}

EventLog cohort_log(bool everyone_returns) {
  EventLog log;
  for (int i = 0; i < 4; ++i) log.users.push_back({"u" + std::to_string(i), 2, "US"});
  log.users.push_back({"old", -30, "US"});
  for (int i = 0; i < 4; ++i) {
    // Day-2 opens never count; day 3 is the first counted day, day 10 is past it.
    log.events.push_back({"u" + std::to_string(i), NotiType::MemoryOverUse, EventKind::AppOpen, kSimEpochMs + 2 * kDayMs + 5});
    log.events.push_back({"u" + std::to_string(i), NotiType::MemoryOverUse, EventKind::AppOpen,
                          kSimEpochMs + (everyone_returns ? 3 : 10) * kDayMs + 5});
  }
  return log;
}

TEST(Retention, EveryoneReturns) { EXPECT_EQ(retention_7day(cohort_log(true), 2), 1.0); }

TEST(Retention, NobodyReturns) { EXPECT_EQ(retention_7day(cohort_log(false), 2), 0.0); }

TEST(Retention, EmptyCohort) {
  try {
    retention_7day(cohort_log(true), 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCohort);
  }
}

TEST(AbCompare, IdenticalReportsHaveZeroDeltas) {
  const auto r = simulate_period(generate_population(small_spec()), Policy::Random, 2, 1).report;
  const auto cmp = ab_compare(r, r);
  for (const auto& s : cmp.summary) {
    EXPECT_EQ(s.delta_displays(), 0.0);
    EXPECT_EQ(s.delta_ctr(), 0.0);
  }
}

TEST(AbCompare, SwappedArgumentsNegate) {
  const auto pop = generate_population(small_spec());
  const auto a = simulate_period(pop, Policy::Random, 2, 1).report;
  const auto b = simulate_period(pop, Policy::AlwaysShow, 2, 1).report;
  const auto ab = ab_compare(a, b), ba = ab_compare(b, a);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(ab.summary[t].delta_displays(), -ba.summary[t].delta_displays());
    EXPECT_EQ(ab.summary[t].delta_ctr(), -ba.summary[t].delta_ctr());
  }
  EXPECT_GT(ab.summary[0].delta_displays(), 0.0);
}

TEST(AbCompare, PeriodMismatch) {
  const auto pop = generate_population(small_spec());
  try {
    ab_compare(simulate_period(pop, Policy::Random, 2, 1).report, simulate_period(pop, Policy::Random, 3, 1).report);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PeriodMismatch);
  }
}

TEST(Csv, ReportRoundTrip) {
  const auto r = simulate_period(generate_population(small_spec()), Policy::Random, 2, 1).report;
  const auto text = emit_report_csv(r);
  EXPECT_EQ(text.substr(0, text.find('\n')), "day,hour,noti_type,displays,clicks,ctr");
  const auto back = parse_report_csv(text);
  ASSERT_EQ(back.days, 2);
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    EXPECT_EQ(back.cells[i].displays, r.cells[i].displays);
    EXPECT_EQ(back.cells[i].clicks, r.cells[i].clicks);
  }
  EXPECT_EQ(emit_report_csv(back), text);
}

TEST(Csv, LogRoundTrip) {
  SimOptions o;
  o.collect_log = true;
  const auto r = simulate_period(generate_population(small_spec(100)), Policy::Random, 2, 1, nullptr, o);
  EXPECT_EQ(parse_events_csv(emit_events_csv(r.log)), r.log.events);
  EXPECT_EQ(parse_snapshots_csv(emit_snapshots_csv(r.log)), r.log.snapshots);
  EXPECT_EQ(parse_users_csv(emit_users_csv(r.log)), r.log.users);
}

TEST(Csv, RetentionLayout) {
  SimReport r;
  r.policy = "random";
  r.retention.push_back({0, 4, 3});
  EXPECT_EQ(emit_retention_csv({r}), "cohort_day,policy,retention7\n0,random,0.750000\n");
}

TEST(Csv, EventErrors) {
  EXPECT_THROW(parse_events_csv("u1,noti1,display\n"), Error);
  EXPECT_THROW(parse_events_csv("u1,noti7,display,5\n"), Error);
  EXPECT_THROW(parse_events_csv("u1,noti1,poke,5\n"), Error);
  try {
    parse_events_csv("u1,noti1,display,9\nu1,noti1,click,5\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsortedHistory);
  }
}

}  // namespace
}  // namespace c3po
