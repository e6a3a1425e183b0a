#include <gtest/gtest.h>

#include <cmath>

#include "edgemar/workload.hpp"

using namespace edgemar;

namespace {

Request with_probs(NodeId source, double stay, std::map<NodeId, double> mob) {
  Request r;
  r.source = source;
  r.stayProb = stay;
  r.mobility = std::move(mob);
  return r;
}

}  // namespace

TEST(Workload, ThirtyRequestsAreValidDistributions) {
  auto t = generate_topology({});
  WorkloadParams w;
  auto rs = generate_requests(t, w, 7);
  ASSERT_EQ(rs.size(), 30u);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    EXPECT_EQ(r.id, static_cast<RequestId>(i));
    EXPECT_TRUE(t.is_active(r.source));
    double sum = r.stayProb;
    for (const auto& [node, p] : r.mobility) {
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NO_THROW(validate_request(t, r));
    EXPECT_GE(r.aroBytes, 125830);
    EXPECT_LE(r.aroBytes, 2LL << 20);
    EXPECT_EQ(r.unitsPerFunction, 1);
    EXPECT_EQ(r.aroId, static_cast<long long>(i));
    // moving mass sigma is drawn from [0.5, 1]
    EXPECT_GE(1.0 - r.stayProb, 0.5 - 1e-12);
    for (const auto& [node, p] : r.mobility) {
      auto nbrs = t.adjacent_ars(r.source);
      EXPECT_NE(std::find(nbrs.begin(), nbrs.end(), node), nbrs.end());
    }
  }
}

TEST(Workload, SingleActiveEcAtLeftmostLeafFixesEverySource) {
  auto base = generate_topology({});
  std::vector<NodeId> parent(base.node_count());
  for (int v = 0; v < base.node_count(); ++v) parent[v] = base.parent(v);
  auto ecs = base.ecs();
  for (auto& e : ecs) e.active = false;
  const NodeId leftmost = base.leaves().front();
  ecs[leftmost].active = true;
  Topology t(1, 4, parent, ecs);
  for (const auto& r : generate_requests(t, {}, 3)) {
    EXPECT_EQ(r.source, leftmost);
    // the leftmost AR has a single neighbour
    EXPECT_LE(r.mobility.size(), 1u);
  }
}

TEST(Workload, SameSeedSameRequests) {
  auto t = generate_topology({});
  EXPECT_EQ(generate_requests(t, {}, 11), generate_requests(t, {}, 11));
  EXPECT_NE(generate_requests(t, {}, 11), generate_requests(t, {}, 12));
}

TEST(Workload, MobilityCanBeDisabled) {
  auto t = generate_topology({});
  WorkloadParams w;
  w.mobility = false;
  for (const auto& r : generate_requests(t, w, 5)) {
    EXPECT_DOUBLE_EQ(r.stayProb, 1.0);
    EXPECT_TRUE(r.mobility.empty());
    EXPECT_EQ(most_likely_destination(t, r), r.source);
  }
}

TEST(Workload, SharedAroPoolReusesIdsWithOneSize) {
  auto t = generate_topology({});
  WorkloadParams w;
  w.sharedAroPool = 3;
  std::map<long long, long long> sizes;
  for (const auto& r : generate_requests(t, w, 9)) {
    EXPECT_LT(r.aroId, 3);
    auto [it, fresh] = sizes.emplace(r.aroId, r.aroBytes);
    EXPECT_EQ(it->second, r.aroBytes);
  }
}

TEST(Workload, RejectsBadParameters) {
  auto t = generate_topology({});
  WorkloadParams w;
  w.requestCount = 0;
  EXPECT_THROW(generate_requests(t, w, 1), ParameterError);
  w = {};
  w.minMoveMass = 0.9;
  w.maxMoveMass = 0.1;
  EXPECT_THROW(generate_requests(t, w, 1), ParameterError);
}

TEST(MostLikelyDestination, Examples) {
  auto t = generate_topology({});
  const auto& leaves = t.leaves();
  const NodeId s = leaves[5], left = leaves[4], right = leaves[6];
  EXPECT_EQ(most_likely_destination(t, with_probs(s, 0.6, {{right, 0.4}})), s);
  EXPECT_EQ(most_likely_destination(t, with_probs(s, 0.2, {{left, 0.5}, {right, 0.3}})), left);
  // exact tie: the lower leaf position wins
  EXPECT_EQ(most_likely_destination(t, with_probs(s, 0.5, {{right, 0.5}})), s);
  EXPECT_EQ(most_likely_destination(t, with_probs(s, 0.5, {{left, 0.5}})), left);
}

TEST(MostLikelyDestinationProperty, InvariantUnderUniformRescaling) {
  auto t = generate_topology({});
  Rng rng = make_rng(5, 1);
  for (const auto& r : generate_requests(t, {}, 21)) {
    const double k = uniform_real(rng, 0.1, 10.0);
    Request scaled = r;
    double total = scaled.stayProb * k;
    for (auto& [node, p] : scaled.mobility) total += p * k;
    scaled.stayProb = scaled.stayProb * k / total;
    for (auto& [node, p] : scaled.mobility) p = p * k / total;
    EXPECT_EQ(most_likely_destination(t, scaled), most_likely_destination(t, r));
  }
}

TEST(Workload, ValidateRequestCatchesBrokenDistributions) {
  auto t = generate_topology({});
  const auto& leaves = t.leaves();
  EXPECT_THROW(validate_request(t, with_probs(leaves[2], 0.5, {{leaves[3], 0.4}})), ParameterError);
  EXPECT_THROW(validate_request(t, with_probs(leaves[2], 0.5, {{leaves[9], 0.5}})), ParameterError);
  EXPECT_THROW(validate_request(t, with_probs(1, 1.0, {})), ParameterError);
  EXPECT_NO_THROW(validate_request(t, with_probs(leaves[2], 0.5, {{leaves[3], 0.5}})));
}

TEST(Workload, DestinationDistributionIncludesStay) {
  auto t = generate_topology({});
  for (const auto& r : generate_requests(t, {}, 4)) {
    auto d = destination_distribution(r);
    double sum = 0.0;
    for (const auto& [node, p] : d) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(d.at(r.source), r.stayProb);
  }
}
