#include <gtest/gtest.h>

#include "edgemar/heuristics.hpp"

using namespace edgemar;

namespace {

// Root with three active leaf ECs 1, 2, 3 (left to right).
Topology three_leaves(int capacity, int cores = 4) {
  std::vector<NodeId> parent{kNoNode, 0, 0, 0};
  std::vector<EcNode> ecs(4);
  for (int v = 1; v <= 3; ++v) ecs[v] = {v, capacity, cores, 16 * kGiB, true};
  return Topology(1, 3, parent, ecs);
}

std::vector<Request> at(NodeId s, int count) {
  std::vector<Request> rs;
  for (int i = 0; i < count; ++i) {
    Request r;
    r.id = i;
    r.source = s;
    r.aroId = i;
    r.aroBytes = 1 << 20;
    rs.push_back(r);
  }
  return rs;
}

void expect_sound(const Topology& t, const std::vector<Request>& rs, const SchemeResult& res) {
  LoadLedger l;
  ASSERT_EQ(res.plans.size(), rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    if (res.plans[i].cloud) continue;
    auto next = apply_assignment(t, l, rs[i], res.plans[i].assignment());
    ASSERT_TRUE(std::holds_alternative<LoadLedger>(next)) << "request " << i;
    l = std::get<LoadLedger>(next);
  }
}

}  // namespace

TEST(RandS, SingleEcIsForced) {
  TopologyParams tp;
  tp.activeCount = 1;
  const auto t = generate_topology(tp);
  WorkloadParams w;
  w.requestCount = 5;
  for (const auto& pl : rand_s(t, {}, generate_requests(t, w, 1), 9).plans) EXPECT_EQ(pl.classIndex, 1);
}

TEST(RandS, SeedDeterminesPlans) {
  const auto t = generate_topology({});
  const auto rs = generate_requests(t, {}, 2);
  const auto a = rand_s(t, {}, rs, 5), b = rand_s(t, {}, rs, 5), c = rand_s(t, {}, rs, 6);
  EXPECT_EQ(a.plans, b.plans);
  EXPECT_NE(a.plans, c.plans);
}

TEST(RandS, ZeroCapacitySendsEverythingToTheCloud) {
  TopologyParams tp;
  tp.capacityUnits = 0;
  const auto t = generate_topology(tp);
  const auto rs = generate_requests(t, {}, 2);
  const auto res = rand_s(t, {}, rs, 1);
  EXPECT_EQ(res.cloudCount, static_cast<int>(rs.size()));
  for (const auto& pl : res.plans) EXPECT_TRUE(pl.cloud);
  EXPECT_EQ(cfs(t, {}, rs).cloudCount, static_cast<int>(rs.size()));
  EXPECT_EQ(util(t, {}, rs).cloudCount, static_cast<int>(rs.size()));
}

TEST(Cfs, CoLocatesAtAnEmptySourceEc) {
  const auto t = three_leaves(14);
  const auto res = cfs(t, {}, at(2, 1));
  EXPECT_EQ(res.plans[0].assignment(), (Assignment{2, 2}));
}

TEST(Cfs, OneFreeUnitSplitsToTheNextNearest) {
  const auto t = three_leaves(3);
  const auto res = cfs(t, {}, at(1, 2));
  EXPECT_EQ(res.plans[0].assignment(), (Assignment{1, 1}));
  // EC 2 and EC 3 are both two hops away; the lower leaf position wins
  EXPECT_EQ(res.plans[1].assignment(), (Assignment{1, 2}));
}

TEST(Cfs, FullNetworkFallsBackToTheCloud) {
  const auto t = three_leaves(2);
  const auto res = cfs(t, {}, at(1, 4));
  EXPECT_EQ(res.cloudCount, 1);
  EXPECT_TRUE(res.plans[3].cloud);
  DelayParams p;
  EXPECT_DOUBLE_EQ(total_delay(t, p, at(1, 4), res.plans) - total_delay(t, p, at(1, 3), {res.plans.begin(), res.plans.begin() + 3}),
                   cloud_delay(t, p, at(1, 4)[3]));
}

TEST(Util, BehavesAsCfsBelowTheThreshold) {
  const auto t = three_leaves(14);
  const auto rs = at(2, 3);
  EXPECT_EQ(util(t, {}, rs).plans, cfs(t, {}, rs).plans);
}

TEST(Util, OverloadedNearestEcUsesTheLeastLoadedNeighbour) {
  const auto t = three_leaves(20);
  const auto res = util(t, {}, at(2, 10));
  // 8 co-located requests fill EC 2 to exactly 80 percent
  for (int i = 0; i < 8; ++i) EXPECT_EQ(res.plans[i].assignment(), (Assignment{2, 2})) << i;
  // next one would reach 90 percent: neighbours 1 and 3 tie at zero, lower leaf wins
  EXPECT_EQ(res.plans[8].assignment(), (Assignment{1, 1}));
  // now EC 3 is the least loaded neighbour
  EXPECT_EQ(res.plans[9].assignment(), (Assignment{3, 3}));
}

TEST(Fact, IsTheMobilityBlindOptimum) {
  TopologyParams tp;
  tp.capacityUnits = 10;
  const auto t = generate_topology(tp);
  const auto rs = generate_requests(t, {}, 8);
  const auto f = fact(t, {}, rs);
  const auto blind = solve_no_mobility(t, {}, rs);
  EXPECT_EQ(f.plans, blind.plans);
  EXPECT_DOUBLE_EQ(f.objectiveMs, total_delay(t, {}, rs, blind.plans));
}

TEST(HeuristicsProperty, NonCloudPlansAreFeasible) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    TopologyParams tp;
    tp.seed = seed;
    tp.capacityUnits = 3 + static_cast<int>(seed % 12);
    if (seed % 4 == 0) tp.cacheBytes = 5LL << 20;
    const auto t = generate_topology(tp);
    WorkloadParams w;
    w.requestCount = 20 + static_cast<int>(seed % 21);
    w.sharedAroPool = seed % 3 == 0 ? 5 : 0;
    const auto rs = generate_requests(t, w, seed);
    DelayParams p;
    expect_sound(t, rs, rand_s(t, p, rs, seed));
    expect_sound(t, rs, cfs(t, p, rs));
    expect_sound(t, rs, util(t, p, rs));
  }
}

TEST(HeuristicsProperty, CfsIsOptimalWithUniformCoresAndNoMobility) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    TopologyParams tp;
    tp.seed = seed;
    tp.minCores = tp.maxCores = 6;
    const auto t = generate_topology(tp);
    WorkloadParams w;
    w.requestCount = 10;
    w.mobility = false;
    const auto rs = generate_requests(t, w, seed);
    std::map<NodeId, int> perSource;
    for (const auto& r : rs) ++perSource[r.source];
    bool roomy = true;
    for (const auto& [s, n] : perSource) roomy = roomy && 2 * n <= t.ec(s).capacityUnits;
    if (!roomy) continue;
    EXPECT_EQ(cfs(t, {}, rs).objectiveMs, solve_optimal(t, {}, rs).objectiveMs) << "seed " << seed;
  }
}
