#include <gtest/gtest.h>

#include "cocoplan/baselines.hpp"
#include "support.hpp"

using namespace cocoplan;
using testkit::Rng;

namespace {

LastTaskState random_last(Rng& rng, const testkit::RandomWorld& world, int n) {
  LastTaskState last;
  for (int i = 0; i < n; ++i) {
    last.finish_time.push_back(rng.uniform(0.0, 15.0));
    last.finish_pos.push_back(rng.pick(world.reachable));
    last.v_max.push_back(rng.uniform(0.5, 2.0));
  }
  return last;
}

}  // namespace

TEST(StrategyConfig, NamesRoundTrip) {
  for (auto k : {StrategyKind::cocoplan, StrategyKind::fix, StrategyKind::fpmr, StrategyKind::frdt,
                 StrategyKind::fimr, StrategyKind::ring, StrategyKind::greedy})
    EXPECT_EQ(strategy_kind_from_string(to_string(k)), k);
  EXPECT_EQ(strategy_kind_from_string("fimr"), StrategyKind::fimr);
  EXPECT_THROW(strategy_kind_from_string("mesh"), std::domain_error);
}

TEST(StrategyConfig, RequiredFieldsPerKind) {
  GridMap map(10, 10, 1.0);
  map.set_occupied({3, 3});
  StrategyConfig s;
  s.kind = StrategyKind::fix;
  EXPECT_THROW(s.validate(3, map, 0.1), std::domain_error);
  s.threshold_n = 2;
  EXPECT_NO_THROW(s.validate(3, map, 0.1));

  s = {};
  s.kind = StrategyKind::fpmr;
  s.fixed_point = Position{3.5, 3.5};
  EXPECT_THROW(s.validate(3, map, 0.1), std::domain_error);
  s.fixed_point = Position{4.5, 3.5};
  EXPECT_NO_THROW(s.validate(3, map, 0.1));

  s = {};
  s.kind = StrategyKind::frdt;
  s.leader = 3;
  EXPECT_THROW(s.validate(3, map, 0.1), std::domain_error);

  s = {};
  s.kind = StrategyKind::fimr;
  s.interval = 35.05;
  EXPECT_THROW(s.validate(3, map, 0.1), std::domain_error);
  s.interval = 35.0;
  EXPECT_NO_THROW(s.validate(3, map, 0.1));

  s = {};
  s.kind = StrategyKind::ring;
  s.ring_order = std::vector<AgentId>{0, 2, 2};
  EXPECT_THROW(s.validate(3, map, 0.1), std::domain_error);
  s.ring_order = std::vector<AgentId>{2, 0, 1};
  EXPECT_NO_THROW(s.validate(3, map, 0.1));
  EXPECT_THROW(s.validate(1, map, 0.1), std::domain_error);
}

TEST(FixedPoint, AtTheLatestFinisherEqualsGathering) {
  Rng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    auto world = testkit::random_world(rng, 16, 16, 1.0, 0.15);
    TravelCache travel(world.map);
    const auto last = random_last(rng, world, rng.integer(2, 6));
    const std::size_t latest =
        std::max_element(last.finish_time.begin(), last.finish_time.end()) - last.finish_time.begin();
    const auto ev = fixed_point_rule(last.finish_pos[latest])(last, 1, travel);
    ASSERT_TRUE(ev);
    EXPECT_NEAR(ev->time, all_gather_time(last, travel), 1e-12);
  }
}

TEST(FixedPoint, ReachableAndConnected) {
  Rng rng(72);
  for (int trial = 0; trial < 200; ++trial) {
    auto world = testkit::random_world(rng, 16, 16, 1.0, 0.15);
    TravelCache travel(world.map);
    const auto last = random_last(rng, world, rng.integer(2, 6));
    const auto ev = fixed_point_rule(rng.pick(world.reachable))(last, 1, travel);
    ASSERT_TRUE(ev);
    for (std::size_t i = 0; i < last.size(); ++i)
      EXPECT_GE(ev->time + 1e-9, last.finish_time[i] + travel.time(last.finish_pos[i], ev->positions[i], last.v_max[i]));
    EXPECT_TRUE(is_connected(comm_graph(ev->positions, world.map, CommParams{})));
  }
}

TEST(Leader, NobodyMovesWhenAllAreInRange) {
  GridMap map(10, 10, 1.0);
  TravelCache travel(map);
  LastTaskState last{{1.0, 2.0, 3.0}, {{1.5, 1.5}, {4.5, 1.5}, {1.5, 5.5}}, {1.0, 1.0, 1.0}};
  const auto ev = leader_rule(0, CommParams{})(last, 1, travel);
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->positions, last.finish_pos);
  EXPECT_DOUBLE_EQ(ev->time, 3.0);
}

TEST(Leader, SingleFollowerWalksTowardTheLeader) {
  GridMap map(60, 4, 0.5);
  TravelCache travel(map);
  const Position leader{0.25, 1.25}, follower{25.25, 1.25};
  LastTaskState last{{0.0, 0.0}, {leader, follower}, {1.0, 1.0}};
  const auto ev = leader_rule(0, CommParams{})(last, 1, travel);
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->positions[0], leader);
  EXPECT_EQ(ev->positions[1], sel_com(follower, leader, travel, CommParams{}));
}

TEST(Leader, ClusterIsConnected) {
  Rng rng(73);
  for (int trial = 0; trial < 500; ++trial) {
    auto world = testkit::random_world(rng, 16, 16, 1.0, 0.15);
    TravelCache travel(world.map);
    const int n = rng.integer(2, 7);
    const auto last = random_last(rng, world, n);
    const auto ev = leader_rule(rng.integer(0, n - 1), CommParams{})(last, 1, travel);
    ASSERT_TRUE(ev);
    EXPECT_TRUE(is_connected(comm_graph(ev->positions, world.map, CommParams{}))) << "trial " << trial;
  }
}

TEST(FixedTime, PinsTheEventOrRejects) {
  GridMap map(30, 4, 1.0);
  TravelCache travel(map);
  LastTaskState last{{2.0, 3.0}, {{0.5, 0.5}, {25.5, 0.5}}, {1.0, 1.0}};
  const auto late = fixed_time_rule(60.0, 0.1, CommParams{})(last, 2, travel);
  ASSERT_TRUE(late);
  EXPECT_DOUBLE_EQ(late->time, 60.0);
  EXPECT_TRUE(is_connected(comm_graph(late->positions, map, CommParams{})));
  EXPECT_FALSE(fixed_time_rule(5.0, 0.1, CommParams{})(last, 2, travel));
  EXPECT_DOUBLE_EQ(next_fixed_time(0.0, 35.0), 35.0);
  EXPECT_DOUBLE_EQ(next_fixed_time(35.0, 35.0), 70.0);
  EXPECT_DOUBLE_EQ(next_fixed_time(34.99, 35.0), 35.0);
}

TEST(Ring, PairsAlternateByParity) {
  RingTopology ring{{0, 1, 2, 3}, {{0, 0}, {1, 1}, {2, 2}}};
  EXPECT_EQ(ring.edges(), 3u);
  EXPECT_EQ(ring.next_meeting(0, 0), (std::pair<int, std::size_t>{0, 0}));
  EXPECT_EQ(ring.next_meeting(0, 1), (std::pair<int, std::size_t>{2, 0}));
  EXPECT_EQ(ring.next_meeting(1, 1), (std::pair<int, std::size_t>{1, 1}));
  EXPECT_EQ(ring.next_meeting(3, 0), (std::pair<int, std::size_t>{0, 2}));
}

TEST(Ring, TwoAgentsMeetOnEvenRounds) {
  RingTopology ring{{1, 0}, {{0, 0}}};
  for (int r = 0; r < 5; ++r) {
    EXPECT_EQ(ring.next_meeting(0, r).first, r % 2 == 0 ? r : r + 1);
    EXPECT_EQ(ring.next_meeting(0, r).second, 0u);
  }
}

TEST(Ring, NewsTravelsOneHopPerMeeting) {
  for (int n = 2; n <= 8; ++n) {
    std::vector<AgentId> order;
    for (int i = 0; i < n; ++i) order.push_back(i);
    RingTopology ring{order, std::vector<Position>(n - 1)};
    std::vector<char> knows(n, 0);
    knows[0] = 1;
    int meetings = 0;
    int round = 0;
    while (!knows[n - 1]) {
      for (std::size_t k = 0; k < ring.edges(); ++k) {
        if (static_cast<int>(k % 2) != round % 2) continue;
        const auto [a, b] = ring.edge(k);
        ++meetings;
        if (knows[a] || knows[b]) knows[a] = knows[b] = 1;
      }
      ++round;
    }
    EXPECT_GE(meetings, n - 1);
    EXPECT_GE(round, n - 1);
  }
}

TEST(Ring, MeetingPointsAreReachableFreeCells) {
  Rng rng(74);
  auto world = testkit::random_world(rng, 20, 20, 1.0, 0.2);
  std::vector<Position> starts;
  for (int i = 0; i < 5; ++i) starts.push_back(rng.pick(world.reachable));
  const auto ring = make_ring({0, 1, 2, 3, 4}, starts, world.map);
  TravelCache travel(world.map);
  ASSERT_EQ(ring.meeting_points.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_FALSE(world.map.occupied(ring.meeting_points[k]));
    EXPECT_TRUE(std::isfinite(travel.distance(starts[k], ring.meeting_points[k])));
  }
}

TEST(LocalRules, SafetyChecks) {
  const std::vector<TemporalRelation> rel{{1, 2, RelationKind::precedence},
                                          {3, 4, RelationKind::mutex},
                                          {5, 6, RelationKind::concurrency}};
  std::map<TaskId, ExecutionInterval> done;
  EXPECT_TRUE(locally_safe(1, rel, done));
  EXPECT_FALSE(locally_safe(2, rel, done));
  EXPECT_TRUE(locally_safe(3, rel, done));
  EXPECT_FALSE(locally_safe(4, rel, done));
  EXPECT_FALSE(locally_safe(5, rel, done));
  done[1] = {1, 0, 1};
  done[3] = {3, 0, 1};
  EXPECT_TRUE(locally_safe(2, rel, done));
  EXPECT_TRUE(locally_safe(4, rel, done));
  done.clear();
  done[2] = {2, 0, 1};
  EXPECT_FALSE(locally_safe(1, rel, done));
}

TEST(LocalRules, FirstCoveringGroup) {
  std::vector<AgentSnapshot> agents{{{0, 0}, 1.0, {0}, 0.0}, {{0, 0}, 1.0, {1}, 0.0}, {{0, 0}, 1.0, {0, 1}, 0.0}};
  Task t;
  t.requirements = {{1, 0}, {1, 1}};
  EXPECT_EQ(first_covering_group(t, {0, 1, 2}, agents), (std::vector<AgentId>{0, 1}));
  EXPECT_EQ(first_covering_group(t, {1, 2}, agents), (std::vector<AgentId>{1, 2}));
  EXPECT_FALSE(first_covering_group(t, {0}, agents));
  EXPECT_FALSE(first_covering_group(t, {0, 2}, std::vector<AgentSnapshot>{agents[0], agents[0], agents[0]}));
}
