#include <gtest/gtest.h>

#include <numeric>
#include <set>
#include <stdexcept>

#include "rideshare/scenario.hpp"

using namespace rideshare;

namespace {

ScenarioConfig small() {
  auto s = scenario_from(KeyValueConfig::parse(R"(
[network]
grid_size = 4
[demand]
passengers = 20
drivers = 12
[run]
seed = 7
replications = 2
)"));
  return s;
}

}  // namespace

TEST(SplitCounts, LargestRemainderKeepsTheTotal) {
  EXPECT_EQ(split_counts(200, {0.1, 0.4, 0.4, 0.1}), (std::vector<int>{20, 80, 80, 20}));
  EXPECT_EQ(split_counts(10, {1.0 / 3, 1.0 / 3, 1.0 / 3}), (std::vector<int>{4, 3, 3}));
  EXPECT_EQ(split_counts(7, {0.25, 0.25, 0.25, 0.25}), (std::vector<int>{2, 2, 2, 1}));
  EXPECT_EQ(split_counts(5, {0.1, 0.9}), (std::vector<int>{1, 4}));
  EXPECT_EQ(split_counts(0, {0.5, 0.5}), (std::vector<int>{0, 0}));
}

TEST(SplitCounts, SumsToTotalOverManyShares) {
  std::vector<double> shares{0.07, 0.13, 0.21, 0.29, 0.3};
  for (int total = 0; total < 300; total += 7) {
    auto c = split_counts(total, shares);
    EXPECT_EQ(std::accumulate(c.begin(), c.end(), 0), total);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LE(std::abs(c[i] - shares[i] * total), 1.0);
  }
}

TEST(GravityOd, MatchesTheDecayFormula) {
  auto net = make_grid_network(3, 1.5, 1.5);
  auto od = gravity_od(net, 100.0, 20.0);
  EXPECT_EQ(od.size(), 9u * 8u);
  for (auto& p : od) {
    EXPECT_NE(p.origin, p.destination);
    const double d = net.distance(*net.index_of(p.origin), *net.index_of(p.destination));
    EXPECT_EQ(p.trips, static_cast<long>(std::floor(100.0 * std::exp(-d / 20.0))));
  }
  EXPECT_TRUE(gravity_od(net, 0.5, 20.0).empty());
  EXPECT_THROW(gravity_od(net, 100.0, 0.0), ConfigError);
}

TEST(PeriodPlan, WarmupFirstThenShares) {
  auto s = scenario_from(KeyValueConfig::parse("[demand]\npassengers = 200\ndrivers = 160"));
  auto plan = period_plan(s);
  ASSERT_EQ(plan.size(), 6u);
  EXPECT_TRUE(plan[0].warmup);
  EXPECT_TRUE(plan[1].warmup);
  EXPECT_EQ(plan[0].passengers, 20);
  EXPECT_EQ(plan[0].drivers, 16);
  EXPECT_FALSE(plan[2].warmup);
  EXPECT_EQ(plan[3].passengers, 80);
  EXPECT_EQ(plan[3].drivers, 64);
  for (std::size_t k = 0; k < plan.size(); ++k) {
    EXPECT_DOUBLE_EQ(plan[k].start, 15.0 * static_cast<double>(k));
    EXPECT_DOUBLE_EQ(plan[k].end, plan[k].start + 15.0);
  }
}

TEST(SamplePopulation, DeterministicAndWithinPeriods) {
  auto s = small();
  auto net = build_network(s);
  auto od = od_source(s, net);
  auto a = sample_population(s, net, od, 11);
  auto b = sample_population(s, net, od, 11);
  auto c = sample_population(s, net, od, 12);
  auto plan = period_plan(s);
  ASSERT_EQ(a.size(), plan.size());
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ASSERT_EQ(a[k].passengers.size(), static_cast<std::size_t>(plan[k].passengers));
    ASSERT_EQ(a[k].drivers.size(), static_cast<std::size_t>(plan[k].drivers));
    for (std::size_t i = 0; i < a[k].passengers.size(); ++i) {
      const auto& p = a[k].passengers[i];
      EXPECT_EQ(p.origin, b[k].passengers[i].origin);
      EXPECT_EQ(p.desired_departure, b[k].passengers[i].desired_departure);
      EXPECT_GE(p.desired_departure, plan[k].start);
      EXPECT_LE(p.online_time, plan[k].end);
      EXPECT_GE(p.online_time, p.desired_departure);
      EXPECT_LE(p.max_match_wait, p.max_pickup_wait);
      EXPECT_GE(p.max_excess, 15.0);
      EXPECT_LE(p.max_excess, 45.0);
      EXPECT_EQ(p.warmup, plan[k].warmup);
      if (i < c[k].passengers.size() && p.desired_departure != c[k].passengers[i].desired_departure)
        differs = true;
    }
    for (const auto& d : a[k].drivers) {
      EXPECT_GE(d.decision_time, d.departure);
      EXPECT_LE(d.decision_time, d.departure + d.sp_time);
      EXPECT_EQ(d.capacity, 4);
    }
  }
  EXPECT_TRUE(differs);
}

TEST(SamplePopulation, RejectsSamplesLargerThanThePopulation) {
  auto s = small();
  auto net = build_network(s);
  std::vector<OdPair> od{{net.id_of(0), net.id_of(1), 5}};
  EXPECT_THROW(sample_population(s, net, od, 1), ConfigError);
}

TEST(ReplicationSeed, DistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (int r = 0; r < 100; ++r) seen.insert(replication_seed(42, r));
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(replication_seed(42, 3), replication_seed(42, 3));
  EXPECT_NE(replication_seed(42, 0), replication_seed(43, 0));
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
  parallel_for(0, 4, [&](std::size_t) { FAIL(); });
}

TEST(ParallelFor, RethrowsTheLowestIndexFailure) {
  try {
    parallel_for(20, 3, [](std::size_t i) {
      if (i == 5 || i == 12) throw std::runtime_error("index " + std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "index 5");
  }
}

TEST(RunReplications, MatchesIndependentRuns) {
  auto s = small();
  auto net = build_network(s);
  auto set = run_replications(s, net, 2);
  ASSERT_EQ(set.reports.size(), 2u);
  ASSERT_EQ(set.audits.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(set.seeds[i], replication_seed(s.seed, static_cast<int>(i)));
    auto solo = run_scenario(s, net, set.seeds[i]);
    EXPECT_EQ(solo.metrics.to_json(), set.reports[i].to_json());
    EXPECT_TRUE(set.audits[i].ok);
  }
}

TEST(Sweep, FactorNamesAndDefaults) {
  EXPECT_EQ(factor_key("supply-level"), "demand.supply_level");
  EXPECT_EQ(factor_key("matching-window"), "provider.window");
  EXPECT_EQ(factor_key("provider.unit_price"), "provider.unit_price");
  EXPECT_EQ(default_levels("matching-window").size(), 10u);
  EXPECT_EQ(default_levels("supply-level").front(), 0.01);
  EXPECT_THROW(default_levels("provider.unit_price"), ConfigError);
}

TEST(Sweep, LevelsApplyAndCsvHasOneRowEach) {
  auto base = KeyValueConfig::parse("[network]\ngrid_size = 4\n[demand]\npassengers = 20\n[run]\nreplications = 2");
  auto out = sweep(base, "supply-level", {0.25, 0.5}, 1);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].level, 0.25);
  EXPECT_EQ(out[1].runs.reports.size(), 2u);
  auto csv = sweep_csv(out);
  auto lines = io::split(csv, '\n');
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0].substr(0, 8), "level,n,");
  EXPECT_NE(std::string(lines[0]).find("runtime_s_mean"), std::string::npos);
  EXPECT_EQ(lines[1].substr(0, 7), "0.25,2,");
  EXPECT_EQ(lines[2].substr(0, 6), "0.5,2,");
  const auto cols = io::split(lines[0], ',').size();
  EXPECT_EQ(io::split(lines[1], ',').size(), cols);
  EXPECT_THROW(sweep(base, "supply-level", {}, 1), ConfigError);
}
