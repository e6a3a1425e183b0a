#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "edgemar/pipeline.hpp"

using namespace edgemar;

namespace {

Topology three_leaves(int capacity) {
  std::vector<NodeId> parent{kNoNode, 0, 0, 0};
  std::vector<EcNode> ecs(4);
  for (int v = 1; v <= 3; ++v) ecs[v] = {v, capacity, 4, 16 * kGiB, true};
  return Topology(1, 3, parent, ecs);
}

Request at(NodeId s, RequestId id) {
  Request r;
  r.id = id;
  r.source = s;
  r.aroId = id;
  r.aroBytes = 1 << 20;
  return r;
}

using V = std::vector<double>;

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.workload.requestCount = 10;
  c.scenarios = 2;
  c.train.maxEpochs = 3;
  c.hidden = 8;
  return c;
}

}  // namespace

TEST(Metrics, Rmse) {
  EXPECT_EQ(rmse(V{1, 2, 3}, V{1, 2, 3}), 0.0);
  EXPECT_NEAR(rmse(V{2, 2}, V{0, 2}), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(rmse(V{1, 2, 3}, V{2, 2, 2}), std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_THROW(rmse(V{1, 2}, V{1}), ParameterError);
  EXPECT_THROW(rmse(V{}, V{}), ParameterError);
}

TEST(Metrics, RelativeError) {
  EXPECT_EQ(rel_error(V{3, 5}, V{3, 5}), 0.0);
  EXPECT_NEAR(rel_error(V{4}, V{2}), 100.0, 1e-12);
  EXPECT_NEAR(rel_error(V{3, 3}, V{3, 6}), 25.0, 1e-12);
  EXPECT_THROW(rel_error(V{1}, V{0}), ParameterError);
  EXPECT_THROW(rel_error(V{1, 2}, V{1}), ParameterError);
}

TEST(Metrics, RSquared) {
  EXPECT_NEAR(r_squared(V{1, 2, 3}, V{1, 2, 3}), 1.0, 1e-12);
  EXPECT_NEAR(r_squared(V{1, 2, 3}, V{2, 2, 2}), 0.0, 1e-12);
  EXPECT_NEAR(r_squared(V{1, 2, 3}, V{1, 2, 4}), 0.5, 1e-12);
  EXPECT_THROW(r_squared(V{2, 2}, V{1, 2}), ParameterError);
}

TEST(Dataset, FullScaleSplit) {
  const auto t = generate_topology({});
  const auto ds = build_dataset(scenario_seeds(1, 5), t, DelayParams{}, WorkloadParams{}, 1);
  ASSERT_EQ(ds.entries.size(), 150u);
  EXPECT_EQ(ds.of(Split::Train).size(), 135u);
  EXPECT_EQ(ds.of(Split::Test).size(), 15u);
  std::set<std::pair<std::uint64_t, RequestId>> keys;
  for (const auto& e : ds.entries) {
    EXPECT_TRUE(t.is_leaf(e.source));
    EXPECT_TRUE(t.is_leaf(e.destination));
    EXPECT_GE(e.classIndex, 1);
    EXPECT_LE(e.classIndex, 36);
    keys.emplace(e.scenarioSeed, e.requestId);
  }
  // train and test are disjoint and cover every (scenario, request) once
  EXPECT_EQ(keys.size(), 150u);
}

TEST(Dataset, TenEntriesSplitNineToOne) {
  const auto t = generate_topology({});
  WorkloadParams w;
  w.requestCount = 10;
  const auto ds = build_dataset(scenario_seeds(2, 1), t, DelayParams{}, w, 2);
  EXPECT_EQ(ds.of(Split::Train).size(), 9u);
  EXPECT_EQ(ds.of(Split::Test).size(), 1u);
}

TEST(Dataset, SameSeedsSameDataset) {
  const auto t = generate_topology({});
  WorkloadParams w;
  w.requestCount = 12;
  const auto a = build_dataset(scenario_seeds(3, 2), t, DelayParams{}, w, 3);
  const auto b = build_dataset(scenario_seeds(3, 2), t, DelayParams{}, w, 3);
  EXPECT_EQ(a.entries, b.entries);
}

TEST(Dataset, InfeasibleScenarioNamesItsSeed) {
  TopologyParams tp;
  tp.capacityUnits = 1;
  const auto t = generate_topology(tp);
  try {
    build_dataset(std::vector<std::uint64_t>{424242}, t, DelayParams{}, WorkloadParams{}, 1);
    ADD_FAILURE() << "expected infeasibility";
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("424242"), std::string::npos);
    EXPECT_EQ(e.binding(), "capacity");
  }
}

TEST(Encoding, OneHotAndDistributionSteps) {
  const auto t = generate_topology({});
  const auto r = generate_requests(t, {}, 5).front();
  const auto onehot = encode_input(t, r, InputEncoding::OneHot);
  const auto dist = encode_input(t, r, InputEncoding::Distribution);
  ASSERT_EQ(onehot.size(), 2u);
  EXPECT_EQ(onehot[0][t.leaf_position(r.source)], 1.0);
  EXPECT_EQ(onehot[1][t.leaf_position(most_likely_destination(t, r))], 1.0);
  EXPECT_EQ(onehot[0], dist[0]);
  EXPECT_DOUBLE_EQ(dist[1][t.leaf_position(r.source)], r.stayProb);
  double sum = 0.0;
  for (double v : dist[1]) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(parse_encoding("onehot"), InputEncoding::OneHot);
  EXPECT_THROW(parse_encoding("one-hot"), ParameterError);
}

TEST(Repair, FeasiblePredictionsStayDirect) {
  const auto t = three_leaves(4);
  std::vector<Request> rs{at(1, 0), at(2, 1), at(3, 2)};
  std::vector<RoutePlan> pred;
  for (const auto& r : rs) pred.push_back(make_plan(t, r, {r.source, r.source}));
  for (const auto& o : feasibility_repair(t, {}, pred, rs)) {
    EXPECT_EQ(o.status, RepairStatus::Direct);
    EXPECT_EQ(o.penaltyMs, 0.0);
  }
}

TEST(Repair, OneUnitOverGetsOneNeighbourBackup) {
  const auto t = three_leaves(2);
  std::vector<Request> rs{at(1, 0), at(1, 1)};
  // both predicted fully on EC 1, which holds one co-located request
  std::vector<RoutePlan> pred{make_plan(t, rs[0], {1, 1}), make_plan(t, rs[1], {1, 1})};
  const auto res = feasibility_repair_with_ledger(t, {}, pred, rs);
  EXPECT_EQ(res.outcomes[0].status, RepairStatus::Direct);
  EXPECT_EQ(res.outcomes[1].status, RepairStatus::NeighborBackup);

  // scan every alternative the rule may use: the predicted EC or one of its neighbours
  LoadLedger l = std::get<LoadLedger>(apply_assignment(t, {}, rs[0], {1, 1}));
  ASSERT_TRUE(check_assignment(t, l, rs[1], {1, 1}).has_value());
  std::vector<Assignment> feasible;
  for (NodeId e : {1, 2})
    for (NodeId h : {1, 2})
      if (!check_assignment(t, l, rs[1], {e, h})) feasible.push_back({e, h});
  ASSERT_EQ(feasible.size(), 1u);
  EXPECT_EQ(*res.outcomes[1].finalAssignment, feasible.front());
  EXPECT_TRUE(ledger_within_limits(t, res.ledger));
}

TEST(Repair, SaturatedNetworkSendsAllToTheCloud) {
  const auto t = three_leaves(0);
  std::vector<Request> rs{at(1, 0), at(2, 1), at(3, 2), at(2, 3)};
  std::vector<RoutePlan> pred;
  for (const auto& r : rs) pred.push_back(make_plan(t, r, {2, 2}));
  DelayParams p;
  const auto outcomes = feasibility_repair(t, p, pred, rs);
  double penalty = 0.0, cloudSum = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    EXPECT_EQ(outcomes[i].status, RepairStatus::Cloud);
    EXPECT_FALSE(outcomes[i].finalAssignment.has_value());
    penalty += outcomes[i].penaltyMs;
    cloudSum += cloud_delay(t, p, rs[i]);
  }
  EXPECT_DOUBLE_EQ(penalty, rs.size() * p.cloudPenaltyMs);
  EXPECT_DOUBLE_EQ(avg_service_delay(t, p, rs, outcomes), cloudSum / rs.size());
}

TEST(Repair, ProcessesRequestsInIdOrder) {
  const auto t = three_leaves(2);
  std::vector<Request> rs{at(1, 1), at(1, 0)};
  std::vector<RoutePlan> pred{make_plan(t, rs[0], {1, 1}), make_plan(t, rs[1], {1, 1})};
  const auto outcomes = feasibility_repair(t, {}, pred, rs);
  EXPECT_EQ(outcomes[0].request, 0);
  EXPECT_EQ(outcomes[0].status, RepairStatus::Direct);
  EXPECT_EQ(outcomes[1].status, RepairStatus::NeighborBackup);
}

TEST(RepairProperty, AdversarialPredictionsNeverBreakTheLedger) {
  Rng rng = make_rng(99, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    TopologyParams tp;
    tp.seed = 1 + trial % 7;
    tp.capacityUnits = static_cast<int>(uniform_index(rng, 6));
    tp.cacheBytes = uniform_index(rng, 2) ? 16 * kGiB : static_cast<long long>(uniform_int(rng, 1, 8)) << 20;
    const auto t = generate_topology(tp);
    WorkloadParams w;
    w.requestCount = 5 + static_cast<int>(uniform_index(rng, 30));
    w.sharedAroPool = uniform_index(rng, 2) ? 4 : 0;
    const auto rs = generate_requests(t, w, trial);
    const int k = t.active_count() * t.active_count();
    std::vector<RoutePlan> pred;
    for (const auto& r : rs)
      pred.push_back(uniform_index(rng, 10) == 0 ? make_cloud_plan(t, r)
                                                 : make_plan(t, r, assignment_of(t, 1 + static_cast<int>(uniform_index(rng, k)))));
    DelayParams p;
    const auto res = feasibility_repair_with_ledger(t, p, pred, rs);
    ASSERT_TRUE(ledger_within_limits(t, res.ledger));
    LoadLedger replay;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const auto& o = res.outcomes[i];
      if (o.status == RepairStatus::Cloud) {
        ASSERT_GT(o.penaltyMs, 0.0);
        continue;
      }
      ASSERT_EQ(o.penaltyMs, 0.0);
      auto next = apply_assignment(t, replay, rs[i], *o.finalAssignment);
      ASSERT_TRUE(std::holds_alternative<LoadLedger>(next));
      replay = std::get<LoadLedger>(next);
    }
    ASSERT_TRUE(std::isfinite(avg_service_delay(t, p, rs, res.outcomes)));
  }
}

TEST(AvgServiceDelay, CoLocatedStayingRequestsCostComputeOnly) {
  const auto t = three_leaves(14);
  std::vector<Request> rs{at(2, 0), at(2, 1)};
  DelayParams p;
  const auto outcomes = feasibility_repair(t, p, {make_plan(t, rs[0], {2, 2}), make_plan(t, rs[1], {2, 2})}, rs);
  EXPECT_DOUBLE_EQ(avg_service_delay(t, p, rs, outcomes), (p.workEta + p.workRho) / 4.0);
}

TEST(AvgServiceDelay, CongestionNeverBeatsTheOptimum) {
  TopologyParams tp;
  tp.capacityUnits = 10;
  const auto t = generate_topology(tp);
  const auto rs = generate_requests(t, {}, 3);
  DelayParams p;
  const auto opt = solve_optimal(t, p, rs);
  std::vector<RoutePlan> greedy;
  for (const auto& r : rs) greedy.push_back(make_plan(t, r, {t.active_at(1), t.active_at(1)}));
  EXPECT_GE(avg_service_delay(t, p, rs, feasibility_repair(t, p, greedy, rs)),
            avg_service_delay(t, p, rs, outcomes_of(p, opt.plans)) - 1e-9);
}

TEST(Experiment, ReportsEverySchemeDeterministically) {
  const auto cfg = small_config();
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  ASSERT_EQ(a.reports.size(), 6u);
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_EQ(a.reports[i].scheme, scheme_names()[i]);
    EXPECT_EQ(a.reports[i].avgDelayMs, b.reports[i].avgDelayMs);
    EXPECT_EQ(a.reports[i].repairCloudCount, b.reports[i].repairCloudCount);
    EXPECT_GE(a.reports[i].accuracyPct, 0.0);
    EXPECT_LE(a.reports[i].accuracyPct, 100.0);
  }
  EXPECT_EQ(a.reports[0].rmse, 0.0);
  EXPECT_EQ(a.model, b.model);
}

TEST(Experiment, NoMobilityMakesOptimAndFactEqual) {
  auto cfg = small_config();
  cfg.workload.mobility = false;
  const auto res = run_experiment(cfg);
  EXPECT_EQ(res.reports[0].avgDelayMs, res.reports[1].avgDelayMs);
}

TEST(Experiment, StageErrorsNameTheStage) {
  auto cfg = small_config();
  cfg.topology.capacityUnits = 1;
  try {
    run_experiment(cfg);
    ADD_FAILURE() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "solve");
  }
  cfg = small_config();
  cfg.topology.activeCount = 40;
  try {
    run_experiment(cfg);
    ADD_FAILURE() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "generate");
  }
}
