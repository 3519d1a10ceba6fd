#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rideshare/scheduling.hpp"

using namespace rideshare;

namespace {

// Straight road 0..10, 1 km and 1 minute per link, both directions.
Network line() {
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  for (int i = 0; i <= 10; ++i) nodes.push_back({i, static_cast<double>(i), 0.0});
  for (int i = 0; i < 10; ++i) {
    links.push_back({i, i + 1, 1.0, {1.0}});
    links.push_back({i + 1, i, 1.0, {1.0}});
  }
  return Network(nodes, links);
}

DriverSnapshot driver(NodeId from, NodeId to) {
  DriverSnapshot d;
  d.id = AgentRef::driver(0);
  d.position = from;
  d.destination = to;
  d.latest_arrival = 100;
  d.max_driving = 100;
  d.direct_km = std::abs(static_cast<double>(to - from));
  return d;
}

RiderRequest rider(std::uint32_t i, NodeId o, NodeId d, double excess = 50) {
  RiderRequest r;
  r.id = AgentRef::passenger(i);
  const double sp = std::abs(static_cast<double>(d - o));
  r.pickup = {o, StopKind::Pickup, r.id, 0, excess, 1};
  r.dropoff = {d, StopKind::DropOff, r.id, sp, sp + excess, -1};
  r.max_ride = sp + excess;
  r.sp_km = sp;
  return r;
}

}  // namespace

TEST(BestSchedule, DriverAloneGoesDirect) {
  auto net = line();
  auto res = best_schedule({driver(0, 10), {}, {}}, net);
  ASSERT_TRUE(res);
  EXPECT_DOUBLE_EQ(res.schedule->vkt, 10.0);
  EXPECT_EQ(res.schedule->stops.size(), 1u);
  EXPECT_EQ(res.schedule->stops.back().kind, StopKind::Destination);
}

TEST(BestSchedule, OnRouteRidersAddNoDistance) {
  auto net = line();
  auto res = best_schedule({driver(0, 10), {rider(0, 2, 6), rider(1, 3, 8)}, {}}, net);
  ASSERT_TRUE(res);
  EXPECT_DOUBLE_EQ(res.schedule->vkt, 10.0);
  EXPECT_TRUE(schedule_feasible(*res.schedule));
  EXPECT_DOUBLE_EQ(*res.schedule->service_time(AgentRef::passenger(1), StopKind::DropOff), 8.0);
}

TEST(BestSchedule, BacktrackCostsDistance) {
  auto net = line();
  auto res = best_schedule({driver(5, 10), {rider(0, 3, 9)}, {}}, net);
  ASSERT_TRUE(res);
  EXPECT_DOUBLE_EQ(res.schedule->vkt, 2 + 6 + 1);
}

TEST(BestSchedule, CapacityForcesSequentialService) {
  auto net = line();
  auto d = driver(0, 10);
  d.capacity = 1;
  auto res = best_schedule({d, {rider(0, 1, 5), rider(1, 2, 6)}, {}}, net);
  ASSERT_TRUE(res);
  EXPECT_DOUBLE_EQ(res.schedule->vkt, 10.0 + 2 * 3);  // back from 5 to 2 costs 3, then 3 again
  EXPECT_TRUE(schedule_feasible(*res.schedule));
}

TEST(BestSchedule, ReportsInfeasibility) {
  auto net = line();
  auto d = driver(0, 10);
  d.latest_arrival = 12;
  auto res = best_schedule({d, {rider(0, 9, 1)}, {}}, net);
  EXPECT_FALSE(res);
  auto tight = rider(0, 8, 9, 2);
  EXPECT_FALSE(best_schedule({driver(0, 10), {tight}, {}}, net));
}

TEST(BestSchedule, OnBoardRidersOnlyNeedDropOff) {
  auto net = line();
  auto d = driver(4, 10);
  d.occupied = 1;
  auto r = rider(0, 1, 7);
  r.on_board = true;
  r.picked_up_at = 0;
  auto res = best_schedule({d, {r}, {}}, net);
  ASSERT_TRUE(res);
  EXPECT_EQ(res.schedule->stops.size(), 2u);
  EXPECT_EQ(res.schedule->stops[0].kind, StopKind::DropOff);
}

TEST(BestSchedule, RelaxedPolicyStillDeliversLateRiders) {
  auto net = line();
  auto d = driver(0, 10);
  d.occupied = 1;
  auto r = rider(0, 0, 10, 1);
  r.on_board = true;
  r.picked_up_at = -30;
  EXPECT_FALSE(best_schedule({d, {r}, {}}, net));
  auto res = best_schedule({d, {r}, {true, false}}, net);
  ASSERT_TRUE(res);
  EXPECT_TRUE(schedule_feasible(*res.schedule, {true, false}));
}

TEST(BestSchedule, MatchesExhaustiveSearchOnGrid) {
  auto net = make_grid_network(4, 1.0);
  Router router(net);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> node(0, 15);
  for (int i = 0; i < 150; ++i) {
    auto d = driver(node(rng), node(rng));
    d.capacity = 1 + i % 3;
    d.latest_arrival = 10 + i % 30;
    std::vector<RiderRequest> riders;
    for (int k = 0; k < 1 + i % 3; ++k) {
      NodeId o = node(rng), dd = node(rng);
      RiderRequest r;
      r.id = AgentRef::passenger(static_cast<std::uint32_t>(k));
      const double sp = router.travel(o, dd, 0).arrival;
      r.pickup = {o, StopKind::Pickup, r.id, 0, 20, 1};
      r.dropoff = {dd, StopKind::DropOff, r.id, sp, sp + 20, -1};
      r.max_ride = sp + 15;
      riders.push_back(r);
    }
    ScheduleRequest req{d, riders, {}};
    auto got = best_schedule(req, router);
    auto want = oracle::exhaustive_darp(req, router);
    ASSERT_EQ(got.schedule.has_value(), want.feasible) << "instance " << i;
    if (got) {
      EXPECT_EQ(got.schedule->vkt, want.vkt) << "instance " << i;
      EXPECT_TRUE(schedule_feasible(*got.schedule));
    }
  }
}

TEST(BestSchedule, IsDeterministic) {
  auto net = line();
  ScheduleRequest req{driver(0, 10), {rider(1, 2, 6), rider(0, 2, 6)}, {}};
  auto a = best_schedule(req, net);
  auto b = best_schedule(req, net);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a.schedule->stops, b.schedule->stops);
  // Equal-VKT orders resolve to the smallest (agent, kind) sequence.
  EXPECT_EQ(a.schedule->stops.front().agent, AgentRef::passenger(0));
}

TEST(EvaluateOrder, KeepsGivenOrderAndWaitsForWindows) {
  auto net = line();
  Router router(net);
  auto r = rider(0, 3, 5);
  r.pickup.earliest = 10;
  auto d = driver(0, 10);
  auto s = evaluate_order(d, {r}, {r.pickup, r.dropoff, Stop{10, StopKind::Destination, d.id, -kInf, 100, 0}},
                          router);
  EXPECT_DOUBLE_EQ(s.arrival[0], 3.0);
  EXPECT_DOUBLE_EQ(s.service[0], 10.0);
  EXPECT_DOUBLE_EQ(s.end_time(), 17.0);
  EXPECT_DOUBLE_EQ(s.vkt, 10.0);
}

TEST(RemovePassengers, DropsOnlyUnpicked) {
  auto net = line();
  auto d = driver(0, 10);
  d.occupied = 1;
  auto onboard = rider(1, 0, 9);
  onboard.on_board = true;
  auto res = best_schedule({d, {rider(0, 2, 6), onboard}, {}}, net);
  ASSERT_TRUE(res);
  auto req = remove_passengers(*res.schedule, {AgentRef::passenger(0)});
  ASSERT_EQ(req.riders.size(), 1u);
  EXPECT_EQ(req.riders[0].id, AgentRef::passenger(1));
  EXPECT_THROW(remove_passengers(*res.schedule, {AgentRef::passenger(1)}), ContractError);
  EXPECT_THROW(remove_passengers(*res.schedule, {AgentRef::passenger(7)}), ContractError);
}
