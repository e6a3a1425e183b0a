#include <gtest/gtest.h>

#include "edgemar/heuristics.hpp"
#include "edgemar/solver.hpp"

using namespace edgemar;

namespace {

struct Instance {
  Topology topo;
  std::vector<Request> requests;
};

// Small random instance: up to 3 active ECs, up to 4 requests, tight units and
// sometimes a cache small enough to bind.
Instance small_instance(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xAB);
  TopologyParams tp;
  tp.seed = seed;
  tp.activeCount = 1 + static_cast<int>(uniform_index(rng, 3));
  tp.capacityUnits = 1 + static_cast<int>(uniform_index(rng, 5));
  if (uniform_index(rng, 3) == 0) tp.cacheBytes = 3LL << 20;
  WorkloadParams w;
  w.requestCount = 1 + static_cast<int>(uniform_index(rng, 4));
  w.mobility = uniform_index(rng, 4) != 0;
  if (uniform_index(rng, 3) == 0) w.sharedAroPool = 2;
  return {generate_topology(tp), generate_requests(generate_topology(tp), w, seed * 7 + 1)};
}

std::vector<int> classes_of(const SolveResult& r) {
  std::vector<int> out;
  for (const auto& p : r.plans) out.push_back(p.classIndex);
  return out;
}

Topology two_symmetric_ecs(int capacity) {
  // root - two leaves, both active, equal cores
  std::vector<NodeId> parent{kNoNode, 0, 0};
  std::vector<EcNode> ecs(3);
  ecs[1] = {1, capacity, 4, 16 * kGiB, true};
  ecs[2] = {2, capacity, 4, 16 * kGiB, true};
  return Topology(1, 2, parent, ecs);
}

Request at(NodeId s, RequestId id = 0) {
  Request r;
  r.id = id;
  r.source = s;
  r.aroId = id;
  r.aroBytes = 1 << 20;
  return r;
}

}  // namespace

TEST(SolverOracle, MatchesExhaustiveOnSmallInstances) {
  int feasible = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto inst = small_instance(seed);
    DelayParams p;
    std::optional<SolveResult> oracle;
    std::string binding;
    try {
      oracle = solve_exhaustive(inst.topo, p, inst.requests);
    } catch (const InfeasibleError& e) {
      binding = e.binding();
    }
    for (bool merge : {true, false}) {
      SolverOptions o;
      o.mergeStates = merge;
      if (!oracle) {
        try {
          solve_optimal(inst.topo, p, inst.requests, o);
          ADD_FAILURE() << "seed " << seed << ": expected infeasibility";
        } catch (const InfeasibleError& e) {
          EXPECT_EQ(e.binding(), binding) << "seed " << seed;
        }
        continue;
      }
      const auto got = solve_optimal(inst.topo, p, inst.requests, o);
      EXPECT_EQ(got.objectiveMs, oracle->objectiveMs) << "seed " << seed;
      EXPECT_EQ(classes_of(got), classes_of(*oracle)) << "seed " << seed;
    }
    feasible += oracle ? 1 : 0;
  }
  // the generator must not make this vacuous
  EXPECT_GT(feasible, 40);
}

TEST(SolverOracle, SearchStrategiesAgreeOnFullSizedInstances) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    TopologyParams tp;
    tp.seed = seed;
    tp.capacityUnits = 10 + static_cast<int>(seed % 3);
    const auto t = generate_topology(tp);
    WorkloadParams w;
    w.requestCount = 18;
    const auto rs = generate_requests(t, w, seed);
    SolverOptions dfs;
    dfs.mergeStates = false;
    const auto a = solve_optimal(t, {}, rs);
    const auto b = solve_optimal(t, {}, rs, dfs);
    EXPECT_EQ(a.objectiveMs, b.objectiveMs);
    EXPECT_EQ(classes_of(a), classes_of(b));
  }
}

TEST(Solver, SingleEcTakesEverything) {
  TopologyParams tp;
  tp.activeCount = 1;
  tp.capacityUnits = 14;
  const auto t = generate_topology(tp);
  WorkloadParams w;
  w.requestCount = 7;
  const auto res = solve_optimal(t, {}, generate_requests(t, w, 3));
  for (const auto& pl : res.plans) EXPECT_EQ(pl.classIndex, 1);
}

TEST(Solver, UnitCapacityForcesASplit) {
  const auto t = two_symmetric_ecs(1);
  const std::vector<Request> rs{at(1)};
  const auto res = solve_optimal(t, {}, rs);
  const auto oracle = solve_exhaustive(t, {}, rs);
  EXPECT_NE(res.plans[0].route[1], res.plans[0].route[2]);
  EXPECT_EQ(classes_of(res), classes_of(oracle));
  EXPECT_EQ(res.objectiveMs, oracle.objectiveMs);
}

TEST(Solver, SymmetricTieGoesToTheSmallerClass) {
  const auto t = two_symmetric_ecs(1);
  const Request r = at(1);
  const int c12 = encode_class(1, 2, 2), c21 = encode_class(2, 1, 2);
  // 0 + 2 + 2 hops one way, 2 + 2 + 0 the other, same cores
  ASSERT_EQ(expected_delay(t, {}, r, assignment_of(t, c12)), expected_delay(t, {}, r, assignment_of(t, c21)));
  EXPECT_EQ(solve_exhaustive(t, {}, {r}).plans[0].classIndex, c12);
  EXPECT_EQ(solve_optimal(t, {}, {r}).plans[0].classIndex, c12);
}

TEST(Solver, IdenticalRequestsTieTowardTheSmallerVector) {
  const auto t = two_symmetric_ecs(2);
  const std::vector<Request> rs{at(1, 0), at(1, 1)};
  const auto res = solve_optimal(t, {}, rs);
  EXPECT_EQ(classes_of(res), classes_of(solve_exhaustive(t, {}, rs)));
  EXPECT_EQ(res.plans[0].classIndex, 1);
  EXPECT_NE(res.plans[1].classIndex, 1);
}

TEST(Solver, ExhaustiveGuardAndInfeasibility) {
  const auto t = generate_topology({});
  WorkloadParams w;
  w.requestCount = 6;  // 36^6 > 1e7
  EXPECT_THROW(solve_exhaustive(t, {}, generate_requests(t, w, 1)), SizeError);

  TopologyParams tp;
  tp.capacityUnits = 0;
  tp.activeCount = 2;
  const auto t0 = generate_topology(tp);
  w.requestCount = 2;
  const auto rs = generate_requests(t0, w, 1);
  try {
    solve_exhaustive(t0, {}, rs);
    ADD_FAILURE() << "capacity 0 must be infeasible";
  } catch (const InfeasibleError& e) {
    EXPECT_EQ(e.binding(), "capacity");
  }
  EXPECT_THROW(solve_optimal(t0, {}, rs), InfeasibleError);
}

TEST(Solver, ReportsTheBindingConstraint) {
  TopologyParams tp;
  tp.activeCount = 2;
  tp.capacityUnits = 14;
  tp.cacheBytes = 1 << 20;  // smaller than any ARO above 1 MiB
  const auto t = generate_topology(tp);
  Request r = at(t.active_at(1));
  r.aroBytes = 2 << 20;
  try {
    solve_optimal(t, {}, {r});
    ADD_FAILURE() << "cache must bind";
  } catch (const InfeasibleError& e) {
    EXPECT_EQ(e.binding(), "cache");
  }
  tp.cacheBytes = 16 * kGiB;
  tp.capacityUnits = 1;
  const auto t1 = generate_topology(tp);
  WorkloadParams w;
  w.requestCount = 2;
  try {
    solve_optimal(t1, {}, generate_requests(t1, w, 2));
    ADD_FAILURE() << "units must bind";
  } catch (const InfeasibleError& e) {
    EXPECT_EQ(e.binding(), "capacity");
  }
}

TEST(SolverProperty, NeverWorseThanAnyHeuristic) {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    TopologyParams tp;
    tp.seed = seed;
    tp.capacityUnits = 10 + static_cast<int>(seed % 5);
    const auto t = generate_topology(tp);
    const auto rs = generate_requests(t, {}, seed + 100);
    DelayParams p;
    const double best = solve_optimal(t, p, rs).objectiveMs;
    for (const auto& h : {rand_s(t, p, rs, seed), cfs(t, p, rs), util(t, p, rs), fact(t, p, rs)}) {
      if (h.cloudCount != 0) continue;
      EXPECT_LE(best, h.objectiveMs + 1e-9) << "seed " << seed;
    }
  }
}

TEST(SolverProperty, RemovingARequestNeverIncreasesTheOptimum) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TopologyParams tp;
    tp.seed = seed;
    tp.capacityUnits = 10;
    const auto t = generate_topology(tp);
    WorkloadParams w;
    w.requestCount = 20;
    auto rs = generate_requests(t, w, seed);
    const double full = solve_optimal(t, {}, rs).objectiveMs;
    Rng rng = make_rng(seed, 9);
    rs.erase(rs.begin() + static_cast<long>(uniform_index(rng, rs.size())));
    for (std::size_t i = 0; i < rs.size(); ++i) rs[i].id = static_cast<RequestId>(i);
    EXPECT_LE(solve_optimal(t, {}, rs).objectiveMs, full + 1e-9);
  }
}

TEST(SolverProperty, NoMobilityEqualityWhenEveryoneStays) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    TopologyParams tp;
    tp.seed = seed;
    tp.capacityUnits = 10 + static_cast<int>(seed % 5);
    const auto t = generate_topology(tp);
    WorkloadParams w;
    w.mobility = false;
    const auto rs = generate_requests(t, w, seed);
    const auto a = solve_optimal(t, {}, rs);
    const auto b = solve_no_mobility(t, {}, rs);
    EXPECT_EQ(a.objectiveMs, b.objectiveMs);
    EXPECT_EQ(classes_of(a), classes_of(b));
  }
}

TEST(SolverProperty, MobilityBlindPlanIsNoBetterUnderTrueMobility) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    TopologyParams tp;
    tp.seed = seed;
    tp.capacityUnits = 10;
    const auto t = generate_topology(tp);
    const auto rs = generate_requests(t, {}, seed);
    const double opt = solve_optimal(t, {}, rs).objectiveMs;
    const auto blind = solve_no_mobility(t, {}, rs);
    EXPECT_GE(total_delay(t, {}, rs, blind.plans), opt - 1e-9);
  }
}

TEST(Solver, PlansAreFeasibleAndDeterministic) {
  TopologyParams tp;
  tp.capacityUnits = 10;
  const auto t = generate_topology(tp);
  const auto rs = generate_requests(t, {}, 4);
  const auto a = solve_optimal(t, {}, rs);
  const auto b = solve_optimal(t, {}, rs);
  EXPECT_EQ(classes_of(a), classes_of(b));
  EXPECT_EQ(a.objectiveMs, b.objectiveMs);
  LoadLedger l;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    auto next = apply_assignment(t, l, rs[i], a.plans[i].assignment());
    ASSERT_TRUE(std::holds_alternative<LoadLedger>(next));
    l = std::get<LoadLedger>(next);
  }
  EXPECT_NEAR(a.objectiveMs, total_delay(t, {}, rs, a.plans), 1e-9);
}
