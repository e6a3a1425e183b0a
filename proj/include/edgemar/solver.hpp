#pragma once

// Exact minimisation of total expected delay over joint (L_eta, L_rho)
// assignments subject to EC unit capacity and ARO cache size.
//
// Among optimal joint assignments the one whose classIndex vector (in request
// id order) is lexicographically smallest is returned. Objectives are always
// the id-ordered sum, so two methods that agree on the plan agree bitwise on
// the objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "edgemar/error.hpp"
#include "edgemar/placement.hpp"
#include "edgemar/topology.hpp"
#include "edgemar/workload.hpp"

namespace edgemar {

struct SolveResult {
  std::vector<RoutePlan> plans;
  double objectiveMs = 0.0;
  long long nodesExplored = 0;
};

struct SolverOptions {
  // Relative slack under which two objectives count as tied.
  double tieTolerance = 1e-9;
  int dualIterations = 300;
  bool useDualBound = true;
  // subgradient steps spent re-pricing each search node
  int nodeDualIterations = 0;
  // restrict interchangeable requests to non-decreasing classes
  bool breakSymmetry = true;
  // merge partial plans with equal EC usage when the cache cannot bind
  bool mergeStates = true;
};

namespace detail {

// Dense per-instance tables indexed by (request, class - 1).
class PlacementInstance {
 public:
  PlacementInstance(const Topology& t, const DelayParams& p, const std::vector<Request>& rs)
      : n_(static_cast<int>(rs.size())), m_(t.active_count()), k_(m_ * m_) {
    p.validate();
    for (std::size_t i = 0; i < rs.size(); ++i)
      if (rs[i].id != static_cast<RequestId>(i))
        throw ParameterError("solver: request ids must be 0..n-1 in order");
    cost_.resize(static_cast<std::size_t>(n_) * k_);
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < k_; ++c)
        cost_[r * k_ + c] = expected_delay(t, p, rs[r], assignment_of(t, c + 1));
    cap_.resize(m_);
    cacheCap_.resize(m_);
    for (int e = 0; e < m_; ++e) {
      cap_[e] = t.ec(t.active_at(e + 1)).capacityUnits;
      cacheCap_[e] = t.ec(t.active_at(e + 1)).cacheBytes;
    }
    units_.resize(n_);
    aro_.resize(n_);
    std::map<long long, int> aroIndex;
    long long distinctBytes = 0;
    for (int r = 0; r < n_; ++r) {
      units_[r] = rs[r].unitsPerFunction;
      auto [it, fresh] = aroIndex.emplace(rs[r].aroId, static_cast<int>(aroBytes_.size()));
      if (fresh) {
        aroBytes_.push_back(rs[r].aroBytes);
        distinctBytes += rs[r].aroBytes;
      }
      aro_[r] = it->second;
    }
    cacheCanBind_ = false;
    for (int e = 0; e < m_; ++e)
      if (distinctBytes > cacheCap_[e]) cacheCanBind_ = true;

    // Interchangeable requests: bitwise-equal cost rows, equal demand and, if
    // the cache can bind, private AROs of equal size. Swapping the classes of
    // two such requests keeps feasibility and the objective.
    std::vector<int> aroUses(aroBytes_.size(), 0);
    for (int r = 0; r < n_; ++r) ++aroUses[aro_[r]];
    twinPrev_.assign(n_, -1);
    twinNext_.assign(n_, -1);
    for (int r = 0; r < n_; ++r)
      for (int q = r - 1; q >= 0; --q) {
        if (units_[q] != units_[r]) continue;
        if (cacheCanBind_ && (aroUses[aro_[q]] != 1 || aroUses[aro_[r]] != 1 ||
                              aroBytes_[aro_[q]] != aroBytes_[aro_[r]]))
          continue;
        if (!std::equal(cost_.begin() + q * k_, cost_.begin() + (q + 1) * k_, cost_.begin() + r * k_)) continue;
        twinPrev_[r] = q;
        twinNext_[q] = r;
        break;
      }
  }

  int requests() const { return n_; }
  int ecs() const { return m_; }
  int classes() const { return k_; }
  double cost(int r, int c) const { return cost_[r * k_ + c]; }
  int eta(int c) const { return c / m_; }
  int rho(int c) const { return c % m_; }
  int units(int r) const { return units_[r]; }
  int capacity(int e) const { return cap_[e]; }
  long long cache_capacity(int e) const { return cacheCap_[e]; }
  int aro(int r) const { return aro_[r]; }
  long long aro_bytes(int a) const { return aroBytes_[a]; }
  int aro_count() const { return static_cast<int>(aroBytes_.size()); }
  bool cache_can_bind() const { return cacheCanBind_; }
  // nearest lower / higher id interchangeable with r, or -1
  int twin_prev(int r) const { return twinPrev_[r]; }
  int twin_next(int r) const { return twinNext_[r]; }

 private:
  int n_, m_, k_;
  std::vector<double> cost_;
  std::vector<int> cap_;
  std::vector<long long> cacheCap_;
  std::vector<int> units_;
  std::vector<int> aro_;
  std::vector<long long> aroBytes_;
  bool cacheCanBind_;
  std::vector<int> twinPrev_, twinNext_;
};

// Mutable residual state used by the depth-first searches.
class SearchState {
 public:
  SearchState(const PlacementInstance& inst, bool trackCache)
      : inst_(inst), trackCache_(trackCache && inst.cache_can_bind()), used_(inst.ecs(), 0), bytes_(inst.ecs(), 0) {
    if (trackCache_) refs_.assign(static_cast<std::size_t>(inst.ecs()) * inst.aro_count(), 0);
  }

  bool fits(int r, int c) const {
    const int e = inst_.eta(c), h = inst_.rho(c), u = inst_.units(r);
    if (e == h) {
      if (used_[e] + 2 * u > inst_.capacity(e)) return false;
    } else if (used_[e] + u > inst_.capacity(e) || used_[h] + u > inst_.capacity(h)) {
      return false;
    }
    if (trackCache_) {
      const int a = inst_.aro(r);
      if (refs_[h * inst_.aro_count() + a] == 0 && bytes_[h] + inst_.aro_bytes(a) > inst_.cache_capacity(h))
        return false;
    }
    return true;
  }

  void push(int r, int c) {
    const int e = inst_.eta(c), h = inst_.rho(c), u = inst_.units(r);
    used_[e] += u;
    used_[h] += u;
    if (trackCache_) {
      const int a = inst_.aro(r);
      if (refs_[h * inst_.aro_count() + a]++ == 0) bytes_[h] += inst_.aro_bytes(a);
    }
  }

  void pop(int r, int c) {
    const int e = inst_.eta(c), h = inst_.rho(c), u = inst_.units(r);
    used_[e] -= u;
    used_[h] -= u;
    if (trackCache_) {
      const int a = inst_.aro(r);
      if (--refs_[h * inst_.aro_count() + a] == 0) bytes_[h] -= inst_.aro_bytes(a);
    }
  }

  int used(int e) const { return used_[e]; }
  int residual(int e) const { return inst_.capacity(e) - used_[e]; }

 private:
  const PlacementInstance& inst_;
  bool trackCache_;
  std::vector<int> used_;
  std::vector<long long> bytes_;
  std::vector<int> refs_;
};

// Lagrangian lower bound over capacity: for multipliers lambda >= 0,
//   sum_r min_c (cost + u_r (lambda[eta c] + lambda[rho c])) - sum_e lambda_e residual_e
// is a valid bound on any sub-instance. lambda = 0 gives the plain
// "every request at its unconstrained best" bound.
class DualBound {
 public:
  DualBound(const PlacementInstance& inst, std::vector<double> lambda) : inst_(inst), lambda_(std::move(lambda)) {}

  double priced_min(int r) const {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < inst_.classes(); ++c) best = std::min(best, priced(r, c));
    return best;
  }

  double priced(int r, int c) const {
    return inst_.cost(r, c) + inst_.units(r) * (lambda_[inst_.eta(c)] + lambda_[inst_.rho(c)]);
  }

  double capacity_credit(const SearchState& s) const {
    double sum = 0.0;
    for (int e = 0; e < inst_.ecs(); ++e) sum += lambda_[e] * s.residual(e);
    return sum;
  }

  const std::vector<double>& lambda() const { return lambda_; }

 private:
  const PlacementInstance& inst_;
  std::vector<double> lambda_;
};

// Projected subgradient ascent on the capacity dual, Polyak steps towards
// `upper` (any feasible objective, or a crude surrogate).
inline std::vector<double> optimise_multipliers(const PlacementInstance& inst, double upper, int iterations) {
  const int m = inst.ecs(), n = inst.requests();
  std::vector<double> lambda(m, 0.0), best = lambda;
  double bestValue = -std::numeric_limits<double>::infinity();
  double theta = 2.0;
  int stall = 0;
  std::vector<int> load(m);
  for (int it = 0; it < iterations; ++it) {
    std::fill(load.begin(), load.end(), 0);
    double value = 0.0;
    for (int r = 0; r < n; ++r) {
      double bestPrice = std::numeric_limits<double>::infinity();
      int bestClass = 0;
      for (int c = 0; c < inst.classes(); ++c) {
        const double v = inst.cost(r, c) + inst.units(r) * (lambda[inst.eta(c)] + lambda[inst.rho(c)]);
        if (v < bestPrice) {
          bestPrice = v;
          bestClass = c;
        }
      }
      value += bestPrice;
      load[inst.eta(bestClass)] += inst.units(r);
      load[inst.rho(bestClass)] += inst.units(r);
    }
    double norm = 0.0;
    std::vector<double> g(m);
    for (int e = 0; e < m; ++e) {
      value -= lambda[e] * inst.capacity(e);
      g[e] = load[e] - inst.capacity(e);
      // projected direction: ignore components that would push lambda below 0
      if (lambda[e] <= 0.0 && g[e] < 0) g[e] = 0.0;
      norm += g[e] * g[e];
    }
    if (value > bestValue + 1e-12) {
      bestValue = value;
      best = lambda;
      stall = 0;
    } else if (++stall >= 10) {
      theta *= 0.5;
      stall = 0;
    }
    if (norm == 0.0 || theta < 1e-6) break;
    const double gap = std::max(upper - value, 1e-6 * std::max(1.0, std::abs(upper)));
    const double step = theta * gap / norm;
    for (int e = 0; e < m; ++e) lambda[e] = std::max(0.0, lambda[e] + step * g[e]);
  }
  return best;
}

// Depth-first search along a fixed request order. With `firstWithin` set the
// search stops at the first complete assignment whose id-ordered objective is
// <= target; otherwise it minimises, tightening `target` on each improvement.
//
// Every node re-prices the remaining requests with capacity multipliers,
// warm-started from its parent and improved by a few subgradient steps on
// the residual sub-instance; the static `bounds` are checked as well.
class DepthFirst {
 public:
  // `candidates[r]` lists the classes request r may take (all if empty).
  DepthFirst(const PlacementInstance& inst, std::vector<int> order, std::vector<const DualBound*> bounds,
             bool trackCache, int nodeIterations = 0, std::vector<std::vector<int>> candidates = {})
      : inst_(inst),
        order_(std::move(order)),
        bounds_(std::move(bounds)),
        state_(inst, trackCache),
        nodeIterations_(nodeIterations),
        cand_(std::move(candidates)) {
    if (bounds_.empty() || bounds_.size() > 8) throw ParameterError("search: between 1 and 8 bounds");
    const int n = inst.requests(), k = inst.classes(), m = inst.ecs();
    suffix_.assign(bounds_.size(), std::vector<double>(n + 1, 0.0));
    for (std::size_t b = 0; b < bounds_.size(); ++b)
      for (int d = n - 1; d >= 0; --d) suffix_[b][d] = suffix_[b][d + 1] + bounds_[b]->priced_min(order_[d]);
    demandSuffix_.assign(n + 1, 0);
    for (int d = n - 1; d >= 0; --d) demandSuffix_[d] = demandSuffix_[d + 1] + 2 * inst.units(order_[d]);
    current_.assign(n, -1);
    priced_.assign(bounds_.size(), std::vector<double>(static_cast<std::size_t>(n) * k));
    for (std::size_t b = 0; b < bounds_.size(); ++b)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < k; ++c) priced_[b][static_cast<std::size_t>(r) * k + c] = bounds_[b]->priced(r, c);
    lambda_.assign(n + 1, bounds_.back()->lambda());
    for (auto& l : lambda_) l.resize(m, 0.0);
    if (cand_.empty()) {
      cand_.assign(n, std::vector<int>(k));
      for (auto& c : cand_) std::iota(c.begin(), c.end(), 0);
    }
    if (static_cast<int>(cand_.size()) != n) throw ParameterError("search: one candidate list per request");
    for (auto& c : cand_) std::sort(c.begin(), c.end());
    // suffix bounds over the allowed classes only
    for (std::size_t b = 0; b < bounds_.size(); ++b)
      for (int d = n - 1; d >= 0; --d) {
        double pm = std::numeric_limits<double>::infinity();
        for (int c : cand_[order_[d]]) pm = std::min(pm, bounds_[b]->priced(order_[d], c));
        suffix_[b][d] = suffix_[b][d + 1] + pm;
      }
    childOrder_.resize(n);
    childPrice_.assign(n, std::vector<double>(k));
    load_.assign(m, 0);
    grad_.assign(m, 0.0);
  }

  void set_lexicographic(bool lex) { lexChildren_ = lex; }
  void set_break_twins(bool on) { breakTwins_ = on; }

  bool minimise(double& incumbent, std::vector<int>& bestClasses) {
    firstWithin_ = false;
    target_ = incumbent;
    found_ = false;
    best_ = &bestClasses;
    recurse(0, 0.0);
    if (found_) incumbent = target_;
    return found_;
  }

  bool first_within(double target, std::vector<int>& classes) {
    firstWithin_ = true;
    target_ = target;
    found_ = false;
    best_ = &classes;
    recurse(0, 0.0);
    return found_;
  }

  long long nodes() const { return nodes_; }

 private:
  bool prunes(double lb) const { return firstWithin_ ? lb > target_ : lb >= target_; }

  // Lagrangian value of the sub-instance below `depth` for multipliers `lam`;
  // fills the per-EC load of the priced optimum.
  double node_value(int depth, const std::vector<double>& lam) {
    const int n = inst_.requests(), m = inst_.ecs();
    std::fill(load_.begin(), load_.end(), 0);
    double value = 0.0;
    for (int d = depth; d < n; ++d) {
      const int r = order_[d];
      const int u = inst_.units(r);
      double best = std::numeric_limits<double>::infinity();
      int arg = cand_[r].empty() ? 0 : cand_[r].front();
      for (int c : cand_[r]) {
        const double v = inst_.cost(r, c) + u * (lam[inst_.eta(c)] + lam[inst_.rho(c)]);
        if (v < best) {
          best = v;
          arg = c;
        }
      }
      value += best;
      load_[inst_.eta(arg)] += u;
      load_[inst_.rho(arg)] += u;
    }
    for (int e = 0; e < m; ++e) value -= lam[e] * state_.residual(e);
    return value;
  }

  // Improves lambda_[depth] in place and returns the best bound found.
  double node_bound(int depth, double partial) {
    const int m = inst_.ecs();
    auto& lam = lambda_[depth];
    double bestValue = node_value(depth, lam);
    if (nodeIterations_ <= 0 || !std::isfinite(target_)) return bestValue;
    std::vector<double>& trial = trial_;
    trial = lam;
    double theta = 1.0;
    for (int it = 0; it < nodeIterations_ && !prunes(partial + bestValue); ++it) {
      double norm = 0.0;
      for (int e = 0; e < m; ++e) {
        double g = load_[e] - state_.residual(e);
        if (trial[e] <= 0.0 && g < 0) g = 0.0;
        grad_[e] = g;
        norm += g * g;
      }
      if (norm == 0.0) break;
      const double gap = std::max(target_ - partial - bestValue, 1e-9 * std::max(1.0, std::abs(target_)));
      const double step = theta * gap / norm;
      for (int e = 0; e < m; ++e) trial[e] = std::max(0.0, trial[e] + step * grad_[e]);
      const double v = node_value(depth, trial);
      if (v > bestValue) {
        bestValue = v;
        lam = trial;
      } else {
        theta *= 0.5;
      }
    }
    return bestValue;
  }

  bool recurse(int depth, double partial) {
    ++nodes_;
    const int n = inst_.requests(), k = inst_.classes();
    if (depth == n) {
      // objective in id order (partial sums follow search order)
      double obj = 0.0;
      for (int r = 0; r < n; ++r) obj += inst_.cost(r, current_[r]);
      if (firstWithin_) {
        if (obj <= target_) {
          *best_ = current_;
          found_ = true;
          return true;
        }
        return false;
      }
      if (obj < target_) {
        target_ = obj;
        *best_ = current_;
        found_ = true;
      }
      return false;
    }
    int residual = 0;
    for (int e = 0; e < inst_.ecs(); ++e) residual += state_.residual(e);
    if (residual < demandSuffix_[depth]) return false;

    // static bounds: child c costs partial + priced_b(r, c) + suffix_b - credit_b
    const std::size_t nb = bounds_.size();
    double base[8];
    for (std::size_t b = 0; b < nb; ++b) {
      base[b] = partial + suffix_[b][depth + 1] - bounds_[b]->capacity_credit(state_);
      if (prunes(base[b] + suffix_[b][depth] - suffix_[b][depth + 1])) return false;
    }

    const int r = order_[depth];
    auto& price = childPrice_[depth];
    auto& co = childOrder_[depth];
    co = cand_[r];
    double nodeBase = -std::numeric_limits<double>::infinity();
    if (nodeIterations_ > 0) {
      if (depth > 0) lambda_[depth] = lambda_[depth - 1];
      const double nodeValue = node_bound(depth, partial);
      if (prunes(partial + nodeValue)) return false;
      // node multipliers: child c costs partial + nodeValue - pmin(r) + priced(r, c)
      const auto& lam = lambda_[depth];
      double pmin = std::numeric_limits<double>::infinity();
      for (int c : co) {
        price[c] = inst_.cost(r, c) + inst_.units(r) * (lam[inst_.eta(c)] + lam[inst_.rho(c)]);
        pmin = std::min(pmin, price[c]);
      }
      nodeBase = partial + nodeValue - pmin;
    } else {
      // strongest static bound orders the children
      const double* pr = priced_.back().data() + static_cast<std::size_t>(r) * k;
      for (int c : co) price[c] = pr[c];
      nodeBase = base[nb - 1];
    }
    if (!lexChildren_) std::stable_sort(co.begin(), co.end(), [&](int a, int b) { return price[a] < price[b]; });

    const std::size_t row = static_cast<std::size_t>(r) * k;
    for (int c : co) {
      if (prunes(nodeBase + price[c])) {
        // children sorted by this bound: the rest can only be worse
        if (!lexChildren_) break;
        continue;
      }
      if (!state_.fits(r, c)) continue;
      // interchangeable requests take non-decreasing classes in id order; the
      // lexicographic tie-break winner always has this form
      if (breakTwins_) {
        const int prev = inst_.twin_prev(r), nxt = inst_.twin_next(r);
        if (prev >= 0 && current_[prev] >= 0 && c < current_[prev]) continue;
        if (nxt >= 0 && current_[nxt] >= 0 && c > current_[nxt]) continue;
      }
      bool pruned = false;
      for (std::size_t b = 0; b < nb && !pruned; ++b) pruned = prunes(base[b] + priced_[b][row + c]);
      if (pruned) continue;
      state_.push(r, c);
      current_[r] = c;
      const bool stop = recurse(depth + 1, partial + inst_.cost(r, c));
      state_.pop(r, c);
      current_[r] = -1;
      if (stop) return true;
    }
    return false;
  }

  const PlacementInstance& inst_;
  std::vector<int> order_;
  std::vector<const DualBound*> bounds_;
  SearchState state_;
  int nodeIterations_;
  std::vector<std::vector<int>> cand_;
  std::vector<std::vector<double>> suffix_;
  std::vector<std::vector<double>> priced_;
  std::vector<std::vector<double>> lambda_;
  std::vector<std::vector<int>> childOrder_;
  std::vector<std::vector<double>> childPrice_;
  std::vector<int> load_;
  std::vector<double> trial_, grad_;
  std::vector<int> demandSuffix_;
  std::vector<int> current_;
  std::vector<int>* best_ = nullptr;
  double target_ = 0.0;
  bool firstWithin_ = false;
  bool found_ = false;
  bool lexChildren_ = false;
  bool breakTwins_ = false;
  long long nodes_ = 0;
};

inline double tie_slack(double v, const SolverOptions& o) { return o.tieTolerance * std::max(1.0, std::abs(v)); }

inline SolveResult to_result(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                             const std::vector<int>& classes, long long nodes) {
  SolveResult res;
  res.plans.reserve(rs.size());
  for (std::size_t r = 0; r < rs.size(); ++r) res.plans.push_back(make_plan(t, rs[r], assignment_of(t, classes[r] + 1)));
  res.objectiveMs = total_delay(t, p, rs, res.plans);
  res.nodesExplored = nodes;
  return res;
}

// Greedy closest-first placement (both functions at the nearest EC with room,
// remainder at the next nearest). Returns false if some request does not fit.
inline bool closest_first_classes(const Topology& t, const std::vector<Request>& rs, const PlacementInstance& inst,
                                  std::vector<int>& classes) {
  SearchState st(inst, true);
  classes.assign(rs.size(), -1);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const int r = static_cast<int>(i);
    std::vector<int> byDistance(inst.ecs());
    std::iota(byDistance.begin(), byDistance.end(), 0);
    std::stable_sort(byDistance.begin(), byDistance.end(), [&](int a, int b) {
      return t.hop_distance(rs[i].source, t.active_at(a + 1)) < t.hop_distance(rs[i].source, t.active_at(b + 1));
    });
    int chosen = -1;
    for (int e : byDistance) {
      for (int h : byDistance) {
        const int c = e * inst.ecs() + h;
        if (st.fits(r, c)) {
          chosen = c;
          break;
        }
      }
      if (chosen >= 0) break;
    }
    if (chosen < 0) return false;
    st.push(r, chosen);
    classes[i] = chosen;
  }
  return true;
}

inline double lagrangian_value(const PlacementInstance& inst, const DualBound& dual) {
  double v = 0.0;
  for (int r = 0; r < inst.requests(); ++r) v += dual.priced_min(r);
  for (int e = 0; e < inst.ecs(); ++e) v -= dual.lambda()[e] * inst.capacity(e);
  return v;
}

// Reduced-cost fixing: class c stays a candidate for r only if some plan
// using it could still cost <= `upper` under the dual bound.
inline std::vector<std::vector<int>> candidates_within(const PlacementInstance& inst, const DualBound& dual,
                                                       double upper) {
  const double root = lagrangian_value(inst, dual);
  const double eps = 1e-12 * std::max(1.0, std::abs(upper));
  std::vector<std::vector<int>> cand(inst.requests());
  for (int r = 0; r < inst.requests(); ++r) {
    const double pmin = dual.priced_min(r);
    for (int c = 0; c < inst.classes(); ++c)
      if (root - pmin + dual.priced(r, c) <= upper + eps) cand[r].push_back(c);
  }
  return cand;
}

inline double plan_cost(const PlacementInstance& inst, const std::vector<int>& classes) {
  double v = 0.0;
  for (int r = 0; r < inst.requests(); ++r) v += inst.cost(r, classes[r]);
  return v;
}

// Cheapest priced class that still fits, requests by descending priced regret.
inline bool lagrangian_greedy(const PlacementInstance& inst, const DualBound& dual, std::vector<int>& classes) {
  const int n = inst.requests(), k = inst.classes();
  std::vector<double> regret(n, 0.0);
  for (int r = 0; r < n; ++r) {
    double b1 = std::numeric_limits<double>::infinity(), b2 = b1;
    for (int c = 0; c < k; ++c) {
      const double v = dual.priced(r, c);
      if (v < b1) {
        b2 = b1;
        b1 = v;
      } else if (v < b2) {
        b2 = v;
      }
    }
    regret[r] = k > 1 ? b2 - b1 : 0.0;
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return regret[a] > regret[b]; });
  SearchState st(inst, true);
  classes.assign(n, -1);
  std::vector<int> byPrice(k);
  for (int r : order) {
    std::iota(byPrice.begin(), byPrice.end(), 0);
    std::stable_sort(byPrice.begin(), byPrice.end(), [&](int a, int b) { return dual.priced(r, a) < dual.priced(r, b); });
    for (int c : byPrice)
      if (st.fits(r, c)) {
        st.push(r, c);
        classes[r] = c;
        break;
      }
    if (classes[r] < 0) return false;
  }
  return true;
}

// Pairwise local search: re-places any two requests jointly while that
// lowers the objective.
inline void improve_by_pairs(const PlacementInstance& inst, std::vector<int>& classes, int maxSweeps = 20) {
  const int n = inst.requests(), k = inst.classes();
  SearchState st(inst, true);
  for (int r = 0; r < n; ++r) st.push(r, classes[r]);
  for (int sweep = 0; sweep < maxSweeps; ++sweep) {
    bool improved = false;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        const int ca = classes[a], cb = classes[b];
        const double before = inst.cost(a, ca) + inst.cost(b, cb);
        st.pop(a, ca);
        st.pop(b, cb);
        double bestGain = 1e-12 * std::max(1.0, before);
        int na = ca, nb = cb;
        for (int x = 0; x < k; ++x) {
          if (inst.cost(a, x) >= before || !st.fits(a, x)) continue;
          st.push(a, x);
          for (int y = 0; y < k; ++y) {
            const double gain = before - inst.cost(a, x) - inst.cost(b, y);
            if (gain > bestGain && st.fits(b, y)) {
              bestGain = gain;
              na = x;
              nb = y;
            }
          }
          st.pop(a, x);
        }
        st.push(a, na);
        st.push(b, nb);
        if (na != ca || nb != cb) {
          classes[a] = na;
          classes[b] = nb;
          improved = true;
        }
      }
    if (!improved) break;
  }
}

// Breadth-first search in request id order that merges partial plans
// reaching the same per-EC unit usage and keeps only the cheapest. Only valid
// when the ARO cache cannot bind (the state ignores cached bytes). States
// whose cost plus bound exceed `upper` are dropped; the backward pass then
// recovers the lexicographically first plan within the optimum plus slack.
struct LayeredOutcome {
  bool applicable = false;
  bool feasible = false;
  std::vector<int> classes;
  long long states = 0;
};

inline LayeredOutcome layered_search(const PlacementInstance& inst, const std::vector<const DualBound*>& bounds,
                                     const std::vector<std::vector<int>>& candidates, double upper,
                                     const SolverOptions& opt, long long stateLimit = 20'000'000) {
  LayeredOutcome out;
  const int n = inst.requests(), m = inst.ecs(), k = inst.classes();
  if (inst.cache_can_bind() || m > 8) return out;
  for (int e = 0; e < m; ++e)
    if (inst.capacity(e) > 255) return out;

  auto allowed = [&](int r) -> const std::vector<int>* { return candidates.empty() ? nullptr : &candidates[r]; };
  std::vector<int> all(k);
  std::iota(all.begin(), all.end(), 0);
  auto classes_of = [&](int r) -> const std::vector<int>& { return allowed(r) ? *allowed(r) : all; };

  const std::size_t nb = bounds.size();
  std::vector<std::vector<double>> suffix(nb, std::vector<double>(n + 1, 0.0));
  std::vector<int> demand(n + 1, 0);
  for (int r = n - 1; r >= 0; --r) {
    demand[r] = demand[r + 1] + 2 * inst.units(r);
    for (std::size_t b = 0; b < nb; ++b) {
      double lo = std::numeric_limits<double>::infinity();
      for (int c : classes_of(r)) lo = std::min(lo, bounds[b]->priced(r, c));
      suffix[b][r] = suffix[b][r + 1] + lo;
    }
  }
  long long supply = 0;
  for (int e = 0; e < m; ++e) supply += inst.capacity(e);
  const double eps = 1e-12 * std::max(1.0, std::isfinite(upper) ? std::abs(upper) : 1.0);

  auto usage = [](std::uint64_t key, int e) { return static_cast<int>((key >> (8 * e)) & 0xFF); };
  auto bound_of = [&](int d, std::uint64_t key) {
    double lb = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < nb; ++b) {
      double credit = 0.0;
      const auto& lambda = bounds[b]->lambda();
      for (int e = 0; e < m; ++e) credit += lambda[e] * (inst.capacity(e) - usage(key, e));
      lb = std::max(lb, suffix[b][d] - credit);
    }
    return lb;
  };
  auto place = [&](std::uint64_t key, int r, int c, std::uint64_t& next) {
    const int a = inst.eta(c), h = inst.rho(c), u = inst.units(r);
    const int needA = a == h ? 2 * u : u;
    if (usage(key, a) + needA > inst.capacity(a)) return false;
    if (a != h && usage(key, h) + u > inst.capacity(h)) return false;
    next = key + (static_cast<std::uint64_t>(u) << (8 * a)) + (static_cast<std::uint64_t>(u) << (8 * h));
    return true;
  };

  struct Layer {
    std::vector<std::uint64_t> keys;
    std::vector<double> cost;
    std::unordered_map<std::uint64_t, int> index;
  };
  std::vector<Layer> layers(n + 1);
  layers[0].keys.push_back(0);
  layers[0].cost.push_back(0.0);
  layers[0].index.emplace(0, 0);
  long long total = 1;
  for (int d = 0; d < n; ++d) {
    Layer& cur = layers[d];
    Layer& nxt = layers[d + 1];
    for (std::size_t i = 0; i < cur.keys.size(); ++i) {
      const std::uint64_t key = cur.keys[i];
      for (int c : classes_of(d)) {
        std::uint64_t to;
        if (!place(key, d, c, to)) continue;
        const double f = cur.cost[i] + inst.cost(d, c);
        long long used = 0;
        for (int e = 0; e < m; ++e) used += usage(to, e);
        if (supply - used < demand[d + 1]) continue;
        if (f + bound_of(d + 1, to) > upper + eps) continue;
        auto [it, fresh] = nxt.index.emplace(to, static_cast<int>(nxt.keys.size()));
        if (fresh) {
          nxt.keys.push_back(to);
          nxt.cost.push_back(f);
          if (++total > stateLimit) return out;
        } else if (f < nxt.cost[it->second]) {
          nxt.cost[it->second] = f;
        }
      }
    }
  }
  out.applicable = true;
  out.states = total;
  if (layers[n].keys.empty()) return out;

  // cost-to-go over the surviving states
  std::vector<std::vector<double>> togo(n + 1);
  togo[n].assign(layers[n].keys.size(), 0.0);
  for (int d = n - 1; d >= 0; --d) {
    const Layer& cur = layers[d];
    const Layer& nxt = layers[d + 1];
    togo[d].assign(cur.keys.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < cur.keys.size(); ++i)
      for (int c : classes_of(d)) {
        std::uint64_t to;
        if (!place(cur.keys[i], d, c, to)) continue;
        auto it = nxt.index.find(to);
        if (it == nxt.index.end()) continue;
        togo[d][i] = std::min(togo[d][i], inst.cost(d, c) + togo[d + 1][it->second]);
      }
  }
  const double best = togo[0][0];
  if (!std::isfinite(best)) return out;
  const double target = best + tie_slack(best, opt);

  std::vector<int> sorted;
  std::uint64_t key = 0;
  double prefix = 0.0;
  out.classes.assign(n, -1);
  for (int d = 0; d < n; ++d) {
    sorted = classes_of(d);
    std::sort(sorted.begin(), sorted.end());
    for (int c : sorted) {
      std::uint64_t to;
      if (!place(key, d, c, to)) continue;
      auto it = layers[d + 1].index.find(to);
      if (it == layers[d + 1].index.end()) continue;
      if (prefix + inst.cost(d, c) + togo[d + 1][it->second] <= target) {
        out.classes[d] = c;
        prefix += inst.cost(d, c);
        key = to;
        break;
      }
    }
    if (out.classes[d] < 0) {
      // rounding left the target just out of reach: follow the cheapest continuation
      double lo = std::numeric_limits<double>::infinity();
      std::uint64_t loKey = key;
      for (int c : sorted) {
        std::uint64_t to;
        if (!place(key, d, c, to)) continue;
        auto it = layers[d + 1].index.find(to);
        if (it == layers[d + 1].index.end()) continue;
        if (inst.cost(d, c) + togo[d + 1][it->second] < lo) {
          lo = inst.cost(d, c) + togo[d + 1][it->second];
          out.classes[d] = c;
          loKey = to;
        }
      }
      prefix += inst.cost(d, out.classes[d]);
      key = loKey;
    }
  }
  out.feasible = true;
  return out;
}

[[noreturn]] inline void report_infeasible(const Topology& t, const std::vector<Request>& rs,
                                           const PlacementInstance& inst) {
  long long demand = 0, supply = 0;
  for (const auto& r : rs) demand += 2LL * r.unitsPerFunction;
  for (int e = 0; e < inst.ecs(); ++e) supply += inst.capacity(e);
  if (demand > supply || !inst.cache_can_bind())
    throw InfeasibleError("capacity", "no feasible placement: EC unit capacity is binding (demand " +
                                          std::to_string(demand) + " units, capacity " + std::to_string(supply) + ")");
  // re-check with the cache ignored to see which constraint binds
  DualBound zero(inst, std::vector<double>(inst.ecs(), 0.0));
  std::vector<int> order(rs.size());
  std::iota(order.begin(), order.end(), 0);
  DepthFirst dfs(inst, order, {&zero}, false);
  std::vector<int> scratch;
  if (dfs.first_within(std::numeric_limits<double>::infinity(), scratch))
    throw InfeasibleError("cache", "no feasible placement: EC cache size is binding");
  (void)t;
  throw InfeasibleError("capacity", "no feasible placement: EC unit capacity is binding");
}

}  // namespace detail

// Branch-and-bound over requests ordered by descending (second best - best)
// delay gap, incumbent from closest-first, bound = unassigned requests at
// their unconstrained best (strengthened with capacity multipliers). A second
// lexicographic pass picks the tie-break winner among optimal plans.
inline SolveResult solve_optimal(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                                 const SolverOptions& opt = {}) {
  if (rs.empty()) return {};
  detail::PlacementInstance inst(t, p, rs);
  const int n = inst.requests(), k = inst.classes();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> gap(n, 0.0);
  for (int r = 0; r < n; ++r) {
    double b1 = std::numeric_limits<double>::infinity(), b2 = b1;
    for (int c = 0; c < k; ++c) {
      const double v = inst.cost(r, c);
      if (v < b1) {
        b2 = b1;
        b1 = v;
      } else if (v < b2) {
        b2 = v;
      }
    }
    gap[r] = k > 1 ? b2 - b1 : 0.0;
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return gap[a] > gap[b]; });

  std::vector<int> best;
  double incumbent = std::numeric_limits<double>::infinity();
  if (detail::closest_first_classes(t, rs, inst, best)) {
    incumbent = 0.0;
    for (int r = 0; r < n; ++r) incumbent += inst.cost(r, best[r]);
  }

  detail::DualBound zero(inst, std::vector<double>(inst.ecs(), 0.0));
  std::vector<const detail::DualBound*> bounds{&zero};
  std::optional<detail::DualBound> dual;
  if (opt.useDualBound) {
    double upper = incumbent;
    if (!std::isfinite(upper)) {
      upper = 0.0;
      for (int r = 0; r < n; ++r) {
        double worst = 0.0;
        for (int c = 0; c < k; ++c) worst = std::max(worst, inst.cost(r, c));
        upper += worst;
      }
    }
    dual.emplace(inst, detail::optimise_multipliers(inst, upper, opt.dualIterations));
    bounds.push_back(&*dual);
  }

  if (opt.useDualBound) {
    std::vector<int> greedy;
    if (detail::lagrangian_greedy(inst, *dual, greedy)) {
      detail::improve_by_pairs(inst, greedy);
      if (detail::plan_cost(inst, greedy) < incumbent) {
        best = greedy;
        incumbent = detail::plan_cost(inst, greedy);
      }
    }
    if (std::isfinite(incumbent) && !best.empty()) {
      std::vector<int> polished = best;
      detail::improve_by_pairs(inst, polished);
      if (detail::plan_cost(inst, polished) < incumbent) {
        best = polished;
        incumbent = detail::plan_cost(inst, polished);
      }
    }
  }
  auto candidates = [&](double upper) {
    return opt.useDualBound && std::isfinite(upper) ? detail::candidates_within(inst, *dual, upper)
                                                    : std::vector<std::vector<int>>{};
  };
  if (opt.mergeStates) {
    const double upper = std::isfinite(incumbent) ? incumbent + detail::tie_slack(incumbent, opt) : incumbent;
    auto merged = detail::layered_search(inst, bounds, candidates(upper), upper, opt);
    if (merged.applicable) {
      if (!merged.feasible) detail::report_infeasible(t, rs, inst);
      return detail::to_result(t, p, rs, merged.classes, merged.states);
    }
  }

  const int nodeIters = opt.useDualBound ? opt.nodeDualIterations : 0;
  long long nodes = 0;
  {
    // strict improvement only: nudge so an incumbent-equal plan is still found
    double target = std::isfinite(incumbent) ? incumbent + detail::tie_slack(incumbent, opt) : incumbent;
    detail::DepthFirst dfs(inst, order, bounds, true, nodeIters, candidates(target));
    dfs.set_break_twins(opt.breakSymmetry);
    std::vector<int> improved;
    if (dfs.minimise(target, improved)) {
      best = improved;
      incumbent = target;
    }
    nodes += dfs.nodes();
  }
  if (!std::isfinite(incumbent)) detail::report_infeasible(t, rs, inst);

  std::vector<int> lex;
  {
    std::vector<int> idOrder(n);
    std::iota(idOrder.begin(), idOrder.end(), 0);
    const double target = incumbent + detail::tie_slack(incumbent, opt);
    detail::DepthFirst dfs(inst, idOrder, bounds, true, nodeIters, candidates(target));
    dfs.set_break_twins(opt.breakSymmetry);
    dfs.set_lexicographic(true);
    if (!dfs.first_within(target, lex)) lex = best;  // unreachable: `best` itself satisfies the target
    nodes += dfs.nodes();
  }
  return detail::to_result(t, p, rs, lex, nodes);
}

// Full enumeration of feasible joint assignments (verification oracle).
inline SolveResult solve_exhaustive(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                                    const SolverOptions& opt = {}, double guard = 1e7) {
  if (rs.empty()) return {};
  detail::PlacementInstance inst(t, p, rs);
  const int n = inst.requests(), k = inst.classes();
  if (std::pow(static_cast<double>(k), n) > guard)
    throw SizeError("solve_exhaustive: " + std::to_string(k) + "^" + std::to_string(n) + " joint assignments exceeds guard");

  detail::SearchState st(inst, true);
  std::vector<int> cur(n, 0);
  double bestValue = std::numeric_limits<double>::infinity();
  long long nodes = 0;
  // pass 0 finds the minimum, pass 1 the first (lexicographic) plan within slack
  std::vector<int> chosen;
  for (int pass = 0; pass < 2; ++pass) {
    const double target = bestValue + (pass == 1 ? detail::tie_slack(bestValue, opt) : 0.0);
    bool done = false;
    std::function<void(int)> walk = [&](int r) {
      ++nodes;
      if (r == n) {
        double obj = 0.0;
        for (int i = 0; i < n; ++i) obj += inst.cost(i, cur[i]);
        if (pass == 0) {
          bestValue = std::min(bestValue, obj);
        } else if (obj <= target) {
          chosen = cur;
          done = true;
        }
        return;
      }
      for (int c = 0; c < k && !done; ++c) {
        if (!st.fits(r, c)) continue;
        st.push(r, c);
        cur[r] = c;
        walk(r + 1);
        st.pop(r, c);
      }
    };
    walk(0);
    if (pass == 0 && !std::isfinite(bestValue)) detail::report_infeasible(t, rs, inst);
  }
  return detail::to_result(t, p, rs, chosen, nodes);
}

// Optimal placement when every request is assumed to stay at its source.
// The objective is the mobility-blind one the planner minimised.
inline SolveResult solve_no_mobility(const Topology& t, const DelayParams& p, const std::vector<Request>& rs,
                                     const SolverOptions& opt = {}) {
  std::vector<Request> still;
  still.reserve(rs.size());
  for (const auto& r : rs) still.push_back(without_mobility(r));
  SolveResult res = solve_optimal(t, p, still, opt);
  // destinations in the route come from the true requests
  for (std::size_t i = 0; i < rs.size(); ++i) res.plans[i].route[3] = most_likely_destination(t, rs[i]);
  return res;
}

}  // namespace edgemar
