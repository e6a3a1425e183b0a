#pragma once

// Delay objective, the (L_eta, L_rho) assignment model with its M^2 class
// codec, and capacity/cache accounting shared by every placement scheme.

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "edgemar/error.hpp"
#include "edgemar/topology.hpp"
#include "edgemar/workload.hpp"

namespace edgemar {

struct DelayParams {
  double perHopMs = 1.0;
  double workEta = 60.0;  // ms * cores
  double workRho = 30.0;  // ms * cores
  double cloudPenaltyMs = 50.0;
  double wComp = 1.0;
  double wNet = 1.0;
  int cloudCores = 8;  // compute speed of the cloud behind the root

  void validate() const {
    if (perHopMs < 0 || workEta < 0 || workRho < 0 || cloudPenaltyMs < 0 || wComp < 0 || wNet < 0)
      throw ParameterError("delay params must be non-negative");
    if (!(wComp + wNet > 0)) throw ParameterError("delay params: wComp + wNet must be positive");
    if (cloudCores < 1) throw ParameterError("delay params: cloudCores must be >= 1");
  }
};

struct Assignment {
  NodeId lEta = kNoNode;
  NodeId lRho = kNoNode;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct RoutePlan {
  RequestId request = 0;
  std::array<NodeId, 4> route{kNoNode, kNoNode, kNoNode, kNoNode};  // {s, lEta, lRho, d}
  int classIndex = 0;  // 0 only for cloud-routed plans
  bool cloud = false;

  Assignment assignment() const { return {route[1], route[2]}; }

  friend bool operator==(const RoutePlan&, const RoutePlan&) = default;
};

inline int encode_class(int etaOrdinal, int rhoOrdinal, int m) {
  if (m < 1 || etaOrdinal < 1 || etaOrdinal > m || rhoOrdinal < 1 || rhoOrdinal > m)
    throw ParameterError("encode_class: ordinal out of range [1," + std::to_string(m) + "]");
  return (etaOrdinal - 1) * m + rhoOrdinal;
}

inline std::pair<int, int> decode_class(int index, int m) {
  if (m < 1 || index < 1 || index > m * m)
    throw ParameterError("decode_class: index " + std::to_string(index) + " out of range");
  return {(index - 1) / m + 1, (index - 1) % m + 1};
}

inline int class_of(const Topology& t, const Assignment& a) {
  return encode_class(t.active_ordinal(a.lEta), t.active_ordinal(a.lRho), t.active_count());
}

inline Assignment assignment_of(const Topology& t, int classIndex) {
  auto [e, h] = decode_class(classIndex, t.active_count());
  return {t.active_at(e), t.active_at(h)};
}

inline RoutePlan make_plan(const Topology& t, const Request& r, const Assignment& a) {
  return RoutePlan{r.id, {r.source, a.lEta, a.lRho, most_likely_destination(t, r)}, class_of(t, a), false};
}

inline RoutePlan make_cloud_plan(const Topology& t, const Request& r) {
  return RoutePlan{r.id, {r.source, t.root(), t.root(), most_likely_destination(t, r)}, 0, true};
}

namespace detail {
// Network part of the objective for any pair of hosting nodes (root allowed).
inline double network_hops(const Topology& t, const Request& r, NodeId eta, NodeId rho) {
  double hops = t.hop_distance(r.source, eta) + t.hop_distance(eta, rho);
  hops += r.stayProb * t.hop_distance(rho, r.source);
  for (const auto& [j, p] : r.mobility) hops += p * t.hop_distance(rho, j);
  return hops;
}
}  // namespace detail

inline double expected_delay(const Topology& t, const DelayParams& p, const Request& r, const Assignment& a) {
  if (!t.is_active(a.lEta) || !t.is_active(a.lRho))
    throw ParameterError("expected_delay: assignment uses an inactive EC");
  const double comp = p.workEta / t.ec(a.lEta).cores + p.workRho / t.ec(a.lRho).cores;
  return p.wComp * comp + p.wNet * p.perHopMs * detail::network_hops(t, r, a.lEta, a.lRho);
}

// Both functions served by the cloud behind the root, plus the fixed penalty.
inline double cloud_delay(const Topology& t, const DelayParams& p, const Request& r) {
  const double comp = (p.workEta + p.workRho) / p.cloudCores;
  return p.wComp * comp + p.wNet * p.perHopMs * detail::network_hops(t, r, t.root(), t.root()) + p.cloudPenaltyMs;
}

inline double plan_delay(const Topology& t, const DelayParams& p, const Request& r, const RoutePlan& plan) {
  return plan.cloud ? cloud_delay(t, p, r) : expected_delay(t, p, r, plan.assignment());
}

// Sum over requests in id order; every scheme reports objectives this way so
// equal plans give bit-identical objectives.
inline double total_delay(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                          const std::vector<RoutePlan>& plans) {
  if (rs.size() != plans.size()) throw ParameterError("total_delay: plan count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) sum += plan_delay(t, p, rs[i], plans[i]);
  return sum;
}

struct CacheSet {
  std::map<long long, long long> aros;  // aroId -> bytes
  long long totalBytes = 0;

  friend bool operator==(const CacheSet&, const CacheSet&) = default;
};

struct LoadLedger {
  std::map<NodeId, int> unitsUsed;
  std::map<NodeId, CacheSet> cachedAros;

  int units(NodeId ec) const {
    auto it = unitsUsed.find(ec);
    return it == unitsUsed.end() ? 0 : it->second;
  }
  long long cached_bytes(NodeId ec) const {
    auto it = cachedAros.find(ec);
    return it == cachedAros.end() ? 0 : it->second.totalBytes;
  }
  bool has_aro(NodeId ec, long long aroId) const {
    auto it = cachedAros.find(ec);
    return it != cachedAros.end() && it->second.aros.count(aroId) > 0;
  }

  friend bool operator==(const LoadLedger&, const LoadLedger&) = default;
};

enum class Limit { Units, Cache };

struct Violation {
  NodeId ec = kNoNode;
  Limit limit = Limit::Units;
};

// Bytes that caching `r`'s ARO at `ec` would add (0 if already cached).
inline long long added_cache_bytes(const LoadLedger& l, NodeId ec, const Request& r) {
  return l.has_aro(ec, r.aroId) ? 0 : r.aroBytes;
}

inline std::optional<Violation> check_assignment(const Topology& t, const LoadLedger& l, const Request& r,
                                                 const Assignment& a) {
  const int need = r.unitsPerFunction;
  const int etaUse = l.units(a.lEta) + need + (a.lEta == a.lRho ? need : 0);
  if (etaUse > t.ec(a.lEta).capacityUnits) return Violation{a.lEta, Limit::Units};
  if (a.lRho != a.lEta && l.units(a.lRho) + need > t.ec(a.lRho).capacityUnits)
    return Violation{a.lRho, Limit::Units};
  if (l.cached_bytes(a.lRho) + added_cache_bytes(l, a.lRho, r) > t.ec(a.lRho).cacheBytes)
    return Violation{a.lRho, Limit::Cache};
  return std::nullopt;
}

// Unchecked mutation; callers verify with check_assignment first.
inline void commit_assignment(LoadLedger& l, const Request& r, const Assignment& a) {
  l.unitsUsed[a.lEta] += r.unitsPerFunction;
  l.unitsUsed[a.lRho] += r.unitsPerFunction;
  auto& cache = l.cachedAros[a.lRho];
  if (cache.aros.emplace(r.aroId, r.aroBytes).second) cache.totalBytes += r.aroBytes;
}

inline std::variant<LoadLedger, Violation> apply_assignment(const Topology& t, const LoadLedger& l, const Request& r,
                                                            const Assignment& a) {
  if (!t.is_active(a.lEta) || !t.is_active(a.lRho))
    throw ParameterError("apply_assignment: assignment uses an inactive EC");
  if (auto v = check_assignment(t, l, r, a)) return *v;
  LoadLedger next = l;
  commit_assignment(next, r, a);
  return next;
}

inline bool ledger_within_limits(const Topology& t, const LoadLedger& l) {
  for (const auto& [ec, used] : l.unitsUsed)
    if (used > t.ec(ec).capacityUnits) return false;
  for (const auto& [ec, cache] : l.cachedAros)
    if (cache.totalBytes > t.ec(ec).cacheBytes) return false;
  return true;
}

}  // namespace edgemar
