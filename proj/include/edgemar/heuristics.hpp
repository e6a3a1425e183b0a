#pragma once

// Baseline placement schemes. All of them respect the same unit and cache
// limits as the optimiser; a request that cannot be placed anywhere is routed
// to the cloud.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "edgemar/placement.hpp"
#include "edgemar/random.hpp"
#include "edgemar/solver.hpp"
#include "edgemar/topology.hpp"
#include "edgemar/workload.hpp"

namespace edgemar {

struct SchemeResult {
  std::vector<RoutePlan> plans;
  double objectiveMs = 0.0;  // under the true mobility
  int cloudCount = 0;
};

namespace detail {

inline SchemeResult finish(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                           std::vector<RoutePlan> plans) {
  SchemeResult out;
  out.plans = std::move(plans);
  out.objectiveMs = total_delay(t, p, rs, out.plans);
  for (const auto& pl : out.plans) out.cloudCount += pl.cloud ? 1 : 0;
  return out;
}

// Active ECs by (hops from `from`, leaf position).
inline std::vector<NodeId> by_distance(const Topology& t, NodeId from) {
  std::vector<NodeId> ecs = t.active_ecs();
  std::stable_sort(ecs.begin(), ecs.end(),
                   [&](NodeId a, NodeId b) { return t.hop_distance(from, a) < t.hop_distance(from, b); });
  return ecs;
}

inline bool has_units(const Topology& t, const LoadLedger& l, NodeId ec, int units) {
  return l.units(ec) + units <= t.ec(ec).capacityUnits;
}

inline bool can_cache(const Topology& t, const LoadLedger& l, NodeId ec, const Request& r) {
  return l.cached_bytes(ec) + added_cache_bytes(l, ec, r) <= t.ec(ec).cacheBytes;
}

// Places eta at the first EC of `etaOrder` with a free unit, then rho at the
// first EC of `rhoOrder` with a free unit and cache room. nullopt if either fails.
inline std::optional<Assignment> place_in_order(const Topology& t, const LoadLedger& l, const Request& r,
                                                const std::vector<NodeId>& etaOrder,
                                                const std::vector<NodeId>& rhoOrder) {
  const int u = r.unitsPerFunction;
  for (NodeId e : etaOrder) {
    if (!has_units(t, l, e, u)) continue;
    for (NodeId h : rhoOrder) {
      const int extra = h == e ? u : 0;
      if (has_units(t, l, h, u + extra) && can_cache(t, l, h, r)) return Assignment{e, h};
    }
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace detail

// Uniform draw among the placements that keep the ledger feasible.
inline SchemeResult rand_s(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                           std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x5A);
  LoadLedger ledger;
  std::vector<RoutePlan> plans;
  const int k = t.active_count() * t.active_count();
  for (const auto& r : rs) {
    std::vector<Assignment> options;
    for (int c = 1; c <= k; ++c) {
      const Assignment a = assignment_of(t, c);
      if (!check_assignment(t, ledger, r, a)) options.push_back(a);
    }
    if (options.empty()) {
      plans.push_back(make_cloud_plan(t, r));
      continue;
    }
    const Assignment a = options[uniform_index(rng, options.size())];
    commit_assignment(ledger, r, a);
    plans.push_back(make_plan(t, r, a));
  }
  return detail::finish(t, p, rs, std::move(plans));
}

// Closest-first: both functions at the nearest EC with room (ties by leaf
// position), the remainder at the next nearest.
inline SchemeResult cfs(const Topology& t, const DelayParams& p, const std::vector<Request>& rs) {
  LoadLedger ledger;
  std::vector<RoutePlan> plans;
  for (const auto& r : rs) {
    const auto order = detail::by_distance(t, r.source);
    if (auto a = detail::place_in_order(t, ledger, r, order, order)) {
      commit_assignment(ledger, r, *a);
      plans.push_back(make_plan(t, r, *a));
    } else {
      plans.push_back(make_cloud_plan(t, r));
    }
  }
  return detail::finish(t, p, rs, std::move(plans));
}

// Closest-first with an occupancy threshold: if co-locating at the nearest EC
// would push it above threshold * capacity, the least loaded adjacent active
// EC (ties by leaf position) with room for both functions is used instead.
inline SchemeResult util(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                         double threshold = 0.8) {
  LoadLedger ledger;
  std::vector<RoutePlan> plans;
  for (const auto& r : rs) {
    const int u = r.unitsPerFunction;
    auto order = detail::by_distance(t, r.source);
    NodeId nearest = kNoNode;
    for (NodeId e : order)
      if (detail::has_units(t, ledger, e, u)) {
        nearest = e;
        break;
      }
    if (nearest != kNoNode && ledger.units(nearest) + 2 * u > threshold * t.ec(nearest).capacityUnits) {
      NodeId backup = kNoNode;
      for (NodeId nb : t.adjacent_active_ecs(nearest)) {
        if (!detail::has_units(t, ledger, nb, 2 * u) || !detail::can_cache(t, ledger, nb, r)) continue;
        if (backup == kNoNode || ledger.units(nb) < ledger.units(backup) ||
            (ledger.units(nb) == ledger.units(backup) && t.leaf_position(nb) < t.leaf_position(backup)))
          backup = nb;
      }
      if (backup != kNoNode) {
        order.erase(std::find(order.begin(), order.end(), backup));
        order.insert(order.begin(), backup);
      }
    }
    if (auto a = detail::place_in_order(t, ledger, r, order, order)) {
      commit_assignment(ledger, r, *a);
      plans.push_back(make_plan(t, r, *a));
    } else {
      plans.push_back(make_cloud_plan(t, r));
    }
  }
  return detail::finish(t, p, rs, std::move(plans));
}

// Mobility-blind optimum, reported under the true mobility.
inline SchemeResult fact(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                         const SolverOptions& opt = {}) {
  return detail::finish(t, p, rs, solve_no_mobility(t, p, rs, opt).plans);
}

inline SchemeResult optim(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                          const SolverOptions& opt = {}) {
  return detail::finish(t, p, rs, solve_optimal(t, p, rs, opt).plans);
}

}  // namespace edgemar
