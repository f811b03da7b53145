// Runs two simulated weeks under always-show and under random display, on the
// same population and random draws, and prints the per-type A/B summary.

#include <cstdio>

#include "c3po/simulator.hpp"

int main() {
  using namespace c3po;
  PopulationSpec spec;
  spec.n_users = 1000;
  spec.new_users_per_day = 40;
  spec.cohort_days = 7;
  const auto pop = generate_population(spec);

  const auto a = simulate_period(pop, Policy::Random, 14, 1).report;
  const auto b = simulate_period(pop, Policy::AlwaysShow, 14, 1).report;
  for (const auto* r : {&a, &b}) {
    const auto t = r->total(0, r->days);
    std::printf("%-12s displays %7zu  clicks %6zu  ctr %.4f  7-day retention %.4f  churned %zu\n", r->policy.c_str(),
                static_cast<std::size_t>(t.displays), static_cast<std::size_t>(t.clicks), t.ctr(),
                r->pooled_retention(), r->churned);
  }
  const auto cmp = ab_compare(a, b);
  for (const auto& s : cmp.summary) {
    std::printf("%s  displays %+.0f  ctr %+.4f  (%s -> %s)\n", to_string(s.noti_type).c_str(), s.delta_displays(),
                s.delta_ctr(), cmp.policy_a.c_str(), cmp.policy_b.c_str());
  }
}
