#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "oracles.hpp"
#include "rideshare/network.hpp"

using namespace rideshare;

namespace {

Network two_bin_line() {
  // 0 -> 1 -> 2; link 0->1 slows from 2 to 10 minutes at t = 10.
  return Network({{0, 0, 0}, {1, 1, 0}, {2, 2, 0}},
                 {{0, 1, 1.0, {2.0, 10.0}}, {1, 2, 1.0, {1.0}}}, 10.0);
}

}  // namespace

TEST(Network, RejectsBadInput) {
  EXPECT_THROW(Network({{0, 0, 0}, {0, 1, 1}}, {}), ValidationError);
  EXPECT_THROW(Network({{0, 0, 0}}, {{0, 5, 1.0, {1.0}}}), ValidationError);
  EXPECT_THROW(Network({{0, 0, 0}, {1, 1, 0}}, {{0, 1, 0.0, {1.0}}}), ValidationError);
  EXPECT_THROW(Network({{0, 0, 0}, {1, 1, 0}}, {{0, 1, 1.0, {}}}), ValidationError);
  EXPECT_THROW(Network({{0, 0, 0}, {1, 1, 0}}, {{0, 1, 1.0, {-1.0}}}), ValidationError);
  EXPECT_THROW(Network({{0, 0, 0}}, {}, 0.0), ValidationError);
}

TEST(Network, TraversalIsFifo) {
  auto net = two_bin_line();
  EXPECT_DOUBLE_EQ(net.traverse(0, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(net.traverse(0, 9.5), 11.5);
  EXPECT_DOUBLE_EQ(net.traverse(0, 10.0), 20.0);
  double prev = -kInf;
  for (double t = 0.0; t < 40.0; t += 0.25) {
    const double e = net.traverse(0, t);
    EXPECT_GE(e, prev) << "entry " << t;
    prev = e;
  }
}

TEST(Network, SpeedUpIsClampedByEarlierEntries) {
  // Slow bin first, fast bin second: entering at 10 may not beat entering at 9.9.
  Network net({{0, 0, 0}, {1, 1, 0}}, {{0, 1, 1.0, {10.0, 1.0}}}, 10.0);
  EXPECT_DOUBLE_EQ(net.traverse(0, 10.0), 20.0);
  EXPECT_DOUBLE_EQ(net.traverse(0, 25.0), 26.0);
  EXPECT_FALSE(net.time_independent());
}

TEST(ShortestItinerary, WaitsOutCongestionViaAlternative) {
  // Direct link is slow after t = 10; the detour is constant.
  Network net({{0, 0, 0}, {1, 1, 0}, {2, 0.5, 0.5}},
              {{0, 1, 1.0, {1.0, 30.0}}, {0, 2, 1.0, {2.0}}, {2, 1, 1.0, {2.0}}}, 10.0);
  auto early = shortest_itinerary(net, 0, 1, 0.0);
  EXPECT_EQ(early.nodes, (std::vector<NodeId>{0, 1}));
  EXPECT_DOUBLE_EQ(early.arrival(), 1.0);
  auto late = shortest_itinerary(net, 0, 1, 12.0);
  EXPECT_EQ(late.nodes, (std::vector<NodeId>{0, 2, 1}));
  EXPECT_DOUBLE_EQ(late.arrival(), 16.0);
  EXPECT_DOUBLE_EQ(late.distance_km, 2.0);
}

TEST(ShortestItinerary, UnreachableThrows) {
  Network net({{0, 0, 0}, {1, 1, 0}}, {{0, 1, 1.0, {1.0}}});
  EXPECT_THROW(shortest_itinerary(net, 1, 0, 0.0), NoPathError);
  EXPECT_THROW(shortest_itinerary(net, 0, 9, 0.0), ValidationError);
  auto self = shortest_itinerary(net, 0, 0, 3.0);
  EXPECT_DOUBLE_EQ(self.arrival(), 3.0);
}

TEST(ShortestItinerary, TiesGoToSmallestNodeSequence) {
  // Two equal routes 0-1-3 and 0-2-3.
  Network net({{0, 0, 0}, {1, 1, 1}, {2, 1, -1}, {3, 2, 0}},
              {{0, 2, 2.0, {2.0}}, {2, 3, 2.0, {2.0}}, {0, 1, 2.0, {2.0}}, {1, 3, 2.0, {2.0}}});
  auto it = shortest_itinerary(net, 0, 3, 0.0);
  EXPECT_EQ(it.nodes, (std::vector<NodeId>{0, 1, 3}));
}

TEST(ShortestItinerary, MatchesTimeExpandedSweepOnRandomGraphs) {
  std::mt19937_64 rng(17);
  for (int g = 0; g < 40; ++g) {
    auto raw = oracle::random_graph(rng, 15);
    auto net = oracle::to_network(raw);
    for (int o = 0; o < raw.n; ++o)
      for (int depart : {0, 7, 13}) {
        const int d = (o + 1 + g) % raw.n;
        auto want = oracle::time_expanded_arrival(raw, o, d, depart, depart + 20 * raw.n + 20);
        std::optional<double> got;
        try {
          got = shortest_itinerary(net, o, d, depart).arrival();
        } catch (const NoPathError&) {
        }
        ASSERT_EQ(got, want) << "graph " << g << " " << o << "->" << d << " at " << depart;
      }
  }
}

TEST(Itinerary, ActualizeScalesSegments) {
  auto net = make_grid_network(3, 1.0, 2.0);
  auto it = shortest_itinerary(net, 0, 8, 10.0);
  auto fast = actualize_itinerary(it, 2.0);
  EXPECT_EQ(fast.nodes, it.nodes);
  EXPECT_DOUBLE_EQ(fast.arrival() - fast.departure(), (it.arrival() - it.departure()) / 2.0);
  EXPECT_EQ(fast.kind, ItineraryKind::Actual);
  EXPECT_THROW(actualize_itinerary(it, 0.0), ContractError);
}

TEST(Itinerary, AdvancePositionSnapsToNextNode) {
  auto net = make_grid_network(4, 1.0, 1.0);
  auto it = shortest_itinerary(net, 0, 3, 0.0);
  auto p = advance_position(it, 1.5);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->node, 2);
  EXPECT_DOUBLE_EQ(p->time, 2.0);
  EXPECT_FALSE(advance_position(it, 3.5));
}

TEST(Router, CachesWithoutChangingAnswers) {
  auto net = two_bin_line();
  Router r(net);
  for (double t : {0.0, 9.0, 10.0, 9.0, 0.0}) {
    auto a = r.travel(0, 2, t);
    auto b = shortest_itinerary(net, 0, 2, t);
    EXPECT_DOUBLE_EQ(a.arrival, b.arrival());
    EXPECT_DOUBLE_EQ(a.distance_km, b.distance_km);
  }
  auto grid = make_grid_network(4, 1.5);
  Router g(grid);
  EXPECT_DOUBLE_EQ(g.travel(0, 15, 100.0).arrival, 100.0 + 6 * 1.5 * 1.5);
  EXPECT_THROW(Router(two_bin_line()).travel(2, 0, 0.0), NoPathError);
}

TEST(LoadNetwork, ReadsProfilesAndFillsGaps) {
  auto dir = std::filesystem::temp_directory_path() / "rideshare_net_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "nodes.csv") << "node_id,x,y\n0,0,0\n1,1,0\n";
  std::ofstream(dir / "links.csv") << "from,to,length_km\n0,1,1\n1,0,1\n";
  std::ofstream(dir / "profiles.csv") << "from,to,bin_start_min,travel_time_min\n0,1,0,2\n0,1,30,5\n";
  auto net = load_network(dir / "nodes.csv", dir / "links.csv", dir / "profiles.csv", 15.0, 1.5);
  EXPECT_EQ(net.link_count(), 2u);
  EXPECT_EQ(net.link(0).travel_min, (std::vector<double>{2, 2, 5}));
  EXPECT_EQ(net.link(1).travel_min, (std::vector<double>{1.5}));

  std::ofstream(dir / "bad.csv") << "from,to,bin_start_min,travel_time_min\n0,1,7,2\n";
  EXPECT_THROW(load_network(dir / "nodes.csv", dir / "links.csv", dir / "bad.csv"), ValidationError);
  std::ofstream(dir / "orphan.csv") << "from,to,bin_start_min,travel_time_min\n0,5,0,2\n";
  EXPECT_THROW(load_network(dir / "nodes.csv", dir / "links.csv", dir / "orphan.csv"), ValidationError);
  std::filesystem::remove_all(dir);
}
