#include <gtest/gtest.h>

#include "rideshare/metrics.hpp"

using namespace rideshare;

namespace {

json gen(double t, std::vector<json> agents) {
  return {{"t", t}, {"seq", 1}, {"kind", "generation"}, {"agents", json::array()},
          {"payload", {{"agents", agents}}}};
}

json agent(const std::string& id, bool warmup = false, double sp_time = 10, double sp_km = 5) {
  return {{"id", id}, {"warmup", warmup}, {"st", 0.0}, {"sp_time", sp_time}, {"sp_km", sp_km}};
}

json change(double t, const std::string& kind, std::vector<std::string> agents,
            std::vector<std::pair<std::string, std::string>> changes, json extra = json::object()) {
  json pl = extra;
  for (auto& [a, e] : changes) pl["changes"].push_back({{"agent", a}, {"event", e}});
  return {{"t", t}, {"seq", 2}, {"kind", kind}, {"agents", agents}, {"payload", pl}};
}

json round(double t, std::vector<std::string> pool_d, std::vector<std::string> pool_p,
           std::vector<std::string> expected, std::vector<std::string> actual, double ez, double az,
           json options) {
  return {{"t", t},
          {"seq", 3},
          {"kind", "matching"},
          {"agents", json::array()},
          {"payload",
           {{"pool_drivers", pool_d},
            {"pool_passengers", pool_p},
            {"expected", expected},
            {"actual", actual},
            {"expected_z", ez},
            {"actual_z", az},
            {"options", options}}}};
}

// D0 carries P0 (wait 3, ride 12); P1 quits unmatched; P2 is warmup.
std::vector<json> sample() {
  json votes_ok = json::array({{{"agent", "D0"}, {"accept", true}}, {{"agent", "P0"}, {"accept", true}}});
  json matched = round(2, {"D0"}, {"P0", "P1"}, {"D0", "P0"}, {"D0", "P0"}, 16, 16,
                       json::array({{{"driver", "D0"}, {"added", {"P0"}}, {"votes", votes_ok}, {"finalized", true}}}));
  matched["payload"]["changes"] = json::array({{{"agent", "P0"}, {"event", "finalized"}}});
  return {
      gen(0, {agent("D0", false, 20, 10), agent("P0"), agent("P1"), agent("P2", true)}),
      matched,
      change(4, "stay_leave", {"P1"}, {{"P1", "quit"}}),
      change(5, "pickup", {"D0", "P0"}, {{"P0", "pickup"}}, {{"wait", 3.0}}),
      change(17, "dropoff", {"D0", "P0"}, {{"P0", "dropoff"}}, {{"ride", 12.0}}),
      change(18, "stay_leave", {"P2"}, {{"P2", "quit"}}),
      change(25, "termination", {"D0"}, {{"D0", "finished"}}, {{"driven_km", 11.0}}),
  };
}

}  // namespace

TEST(Metrics, ComputesRatesFromLog) {
  auto m = compute_metrics(sample());
  EXPECT_DOUBLE_EQ(*m.get("passenger_success_rate"), 0.5);
  EXPECT_DOUBLE_EQ(*m.get("driver_success_rate"), 1.0);
  EXPECT_DOUBLE_EQ(*m.get("overall_success_rate"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*m.get("passenger_excess_time_pct"), 20.0);
  EXPECT_DOUBLE_EQ(*m.get("driver_excess_time_pct"), 25.0);
  EXPECT_DOUBLE_EQ(*m.get("expected_pickup_wait_min"), 0.5 * 3.0);
  EXPECT_DOUBLE_EQ(*m.get("driver_accept_rate"), 1.0);
  EXPECT_DOUBLE_EQ(*m.get("passenger_accept_rate"), 1.0);
  EXPECT_DOUBLE_EQ(*m.get("execution_rate"), 1.0);
  EXPECT_DOUBLE_EQ(*m.get("expected_matching_rate"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*m.get("actual_matching_rate"), 2.0 / 3.0);
  // Baseline 10 + 5 + 5 km; with sharing the driver's 11 km plus P1's 5 km.
  EXPECT_DOUBLE_EQ(*m.get("vkt_saving_pct"), (20.0 - 16.0) / 20.0 * 100.0);
  EXPECT_EQ(*m.get("passengers_left_before_matching"), 1.0);
  EXPECT_EQ(*m.get("passengers"), 2.0);
}

TEST(Metrics, UndefinedValuesAreNull) {
  auto m = compute_metrics(std::vector<json>{gen(0, {agent("P0")}), change(1, "stay_leave", {"P0"}, {{"P0", "quit"}})});
  EXPECT_FALSE(m.get("driver_success_rate"));
  EXPECT_FALSE(m.get("expected_pickup_wait_min"));
  EXPECT_TRUE(m.to_json().at("driver_accept_rate").is_null());
  EXPECT_THROW(m.get("nonsense"), ContractError);
}

TEST(Audit, PassesCompleteLog) { EXPECT_TRUE(audit(fold_log(sample())).ok); }

TEST(Audit, FlagsUnfinishedAgentsAndIllegalTransitions) {
  auto events = sample();
  events.pop_back();
  auto a = audit(fold_log(events));
  EXPECT_FALSE(a.ok);
  events = sample();
  events.push_back(change(30, "pickup", {"D0", "P1"}, {{"P1", "pickup"}}));
  a = audit(fold_log(events));
  EXPECT_FALSE(a.ok);
  ASSERT_FALSE(a.problems.empty());
  EXPECT_NE(a.problems.back().find("P1"), std::string::npos);
}

TEST(ParseLog, ReportsBadLine) {
  EXPECT_THROW(parse_log("{\"t\":1}\nnot json\n"), ParseError);
  EXPECT_EQ(parse_log("{\"a\":1}\n\n{\"b\":2}\n").size(), 2u);
}

TEST(Aggregate, MeanAndSampleStdev) {
  MetricsReport a, b, c;
  a.set("x", 1.0);
  b.set("x", 3.0);
  c.set("x", std::nullopt);
  auto agg = aggregate({a, b, c});
  EXPECT_DOUBLE_EQ(*agg.at("x").mean, 2.0);
  EXPECT_DOUBLE_EQ(*agg.at("x").stdev, std::sqrt(2.0));
  EXPECT_EQ(agg.at("x").n, 2);
}

TEST(RoundsCsv, OneRowPerRound) {
  auto csv = rounds_csv(fold_log(sample()));
  EXPECT_EQ(csv, "round,t,pool,expected,actual,expected_z,actual_z,rejections\n1,2,3,2,2,16,16,0\n");
}

TEST(Profiles, CountsStatusesOverTime) {
  auto csv = collect_profiles(sample(), 5.0);
  EXPECT_EQ(csv.rfind("t,series,value\n", 0), 0u);
  EXPECT_NE(csv.find("\n10,passenger.onboard,1\n"), std::string::npos);
  EXPECT_NE(csv.find("\n20,passenger.finished,1\n"), std::string::npos);
  EXPECT_NE(csv.find("\n2,round.actual_matched,2\n"), std::string::npos);
}
