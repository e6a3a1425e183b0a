#pragma once

// Tree-shaped edge network: root = cloud gateway, interior routers are
// aggregation sites, leaves are access routers (ARs). Every non-root router
// hosts an edge cloud (EC) site; a seeded subset of leaf sites is active.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "edgemar/error.hpp"
#include "edgemar/random.hpp"

namespace edgemar {

using NodeId = int;

inline constexpr NodeId kNoNode = -1;
inline constexpr long long kGiB = 1LL << 30;

struct EcNode {
  NodeId id = kNoNode;
  int capacityUnits = 14;
  int cores = 4;
  long long cacheBytes = 16 * kGiB;
  bool active = false;

  friend bool operator==(const EcNode&, const EcNode&) = default;
};

struct TopologyParams {
  std::uint64_t seed = 1;
  int ecSiteCount = 20;
  int activeCount = 6;
  int arity = 4;
  int capacityUnits = 14;
  int minCores = 4;
  int maxCores = 8;
  long long cacheBytes = 16 * kGiB;
};

class Topology {
 public:
  // Builds the tree from an explicit parent vector (parent[0] must be -1).
  // EC sites are every non-root node; `ecs` is indexed by NodeId (root entry unused).
  Topology(std::uint64_t seed, int arity, std::vector<NodeId> parent, std::vector<EcNode> ecs)
      : seed_(seed), arity_(arity), parent_(std::move(parent)), ecs_(std::move(ecs)) {
    const int n = static_cast<int>(parent_.size());
    if (n < 1 || parent_[0] != kNoNode) throw ParameterError("topology: node 0 must be the root");
    if (static_cast<int>(ecs_.size()) != n) throw ParameterError("topology: ecs must be indexed by node");
    children_.assign(n, {});
    for (int v = 1; v < n; ++v) {
      if (parent_[v] < 0 || parent_[v] >= v)
        throw ParameterError("topology: parents must precede children");
      children_[parent_[v]].push_back(v);
    }
    depth_.assign(n, 0);
    for (int v = 1; v < n; ++v) depth_[v] = depth_[parent_[v]] + 1;

    // leaf order is the left-to-right DFS order
    leafPos_.assign(n, -1);
    std::vector<NodeId> stack{0};
    while (!stack.empty()) {
      NodeId v = stack.back();
      stack.pop_back();
      if (children_[v].empty() && v != 0) {
        leafPos_[v] = static_cast<int>(leaves_.size());
        leaves_.push_back(v);
      }
      for (auto it = children_[v].rbegin(); it != children_[v].rend(); ++it) stack.push_back(*it);
    }

    hops_.assign(static_cast<std::size_t>(n) * n, 0);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) hops_[a * n + b] = tree_path_length(a, b);

    for (NodeId v : leaves_)
      if (ecs_[v].active) active_.push_back(v);
    if (active_.empty()) throw ParameterError("topology: at least one active EC is required");
    for (int v = 1; v < n; ++v)
      if (ecs_[v].active && leafPos_[v] < 0)
        throw ParameterError("topology: active ECs must sit on leaf routers");
    ordinal_.assign(n, 0);
    for (std::size_t i = 0; i < active_.size(); ++i) ordinal_[active_[i]] = static_cast<int>(i) + 1;
  }

  std::uint64_t seed() const { return seed_; }
  int arity() const { return arity_; }
  int node_count() const { return static_cast<int>(parent_.size()); }
  NodeId root() const { return 0; }
  NodeId parent(NodeId v) const { return parent_.at(check(v)); }
  const std::vector<NodeId>& children(NodeId v) const { return children_.at(check(v)); }
  int depth(NodeId v) const { return depth_[check(v)]; }

  bool is_leaf(NodeId v) const { return leafPos_[check(v)] >= 0; }
  int leaf_position(NodeId v) const { return leafPos_[check(v)]; }
  const std::vector<NodeId>& leaves() const { return leaves_; }
  int leaf_count() const { return static_cast<int>(leaves_.size()); }

  const std::vector<EcNode>& ecs() const { return ecs_; }
  const EcNode& ec(NodeId v) const {
    if (check(v) == 0) throw ParameterError("topology: the root hosts no EC site");
    return ecs_[v];
  }
  int ec_site_count() const { return node_count() - 1; }

  // Active ECs sorted by leaf position; ordinals are 1-based positions here.
  const std::vector<NodeId>& active_ecs() const { return active_; }
  int active_count() const { return static_cast<int>(active_.size()); }
  bool is_active(NodeId v) const { return v > 0 && v < node_count() && ordinal_[v] > 0; }
  int active_ordinal(NodeId v) const {
    if (!is_active(v)) throw ParameterError("topology: node " + std::to_string(v) + " is not an active EC");
    return ordinal_[v];
  }
  NodeId active_at(int ordinal) const {
    if (ordinal < 1 || ordinal > active_count())
      throw ParameterError("topology: active ordinal " + std::to_string(ordinal) + " out of range");
    return active_[ordinal - 1];
  }

  int hop_distance(NodeId a, NodeId b) const {
    const int n = node_count();
    return hops_[static_cast<std::size_t>(check(a)) * n + check(b)];
  }

  // Leaves at position +-1, left first.
  std::vector<NodeId> adjacent_ars(NodeId ar) const {
    if (!is_leaf(ar)) throw ParameterError("topology: node " + std::to_string(ar) + " is not an access router");
    std::vector<NodeId> out;
    const int pos = leafPos_[ar];
    if (pos > 0) out.push_back(leaves_[pos - 1]);
    if (pos + 1 < leaf_count()) out.push_back(leaves_[pos + 1]);
    return out;
  }

  // Active ECs at active-ordinal +-1, left first.
  std::vector<NodeId> adjacent_active_ecs(NodeId ec) const {
    const int o = active_ordinal(ec);
    std::vector<NodeId> out;
    if (o > 1) out.push_back(active_[o - 2]);
    if (o < active_count()) out.push_back(active_[o]);
    return out;
  }

  // Copy with every EC's capacity replaced; used by sweeps.
  Topology with_capacity(int units) const {
    auto ecs = ecs_;
    for (std::size_t v = 1; v < ecs.size(); ++v) ecs[v].capacityUnits = units;
    return Topology(seed_, arity_, parent_, std::move(ecs));
  }

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.seed_ == b.seed_ && a.arity_ == b.arity_ && a.parent_ == b.parent_ && a.ecs_ == b.ecs_;
  }

 private:
  int check(NodeId v) const {
    if (v < 0 || v >= node_count()) throw ParameterError("topology: unknown node " + std::to_string(v));
    return v;
  }

  int tree_path_length(NodeId a, NodeId b) const {
    int h = 0;
    while (a != b) {
      if (depth_[a] >= depth_[b])
        a = parent_[a];
      else
        b = parent_[b];
      ++h;
    }
    return h;
  }

  std::uint64_t seed_;
  int arity_;
  std::vector<NodeId> parent_;
  std::vector<EcNode> ecs_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<int> depth_;
  std::vector<int> leafPos_;
  std::vector<NodeId> leaves_;
  std::vector<NodeId> active_;
  std::vector<int> ordinal_;
  std::vector<int> hops_;
};

// Complete `arity`-ary tree of minimal depth with `ecSiteCount` non-root
// routers (heap numbering, root = 0). Active ECs are drawn uniformly without
// replacement among the leaves.
inline Topology generate_topology(const TopologyParams& p) {
  if (p.arity < 2) throw ParameterError("generate_topology: arity must be >= 2");
  if (p.ecSiteCount < 1) throw ParameterError("generate_topology: ecSiteCount must be >= 1");
  if (p.activeCount < 1) throw ParameterError("generate_topology: activeCount must be >= 1");
  if (p.minCores < 1 || p.maxCores < p.minCores) throw ParameterError("generate_topology: bad core range");
  if (p.capacityUnits < 0) throw ParameterError("generate_topology: capacity must be >= 0");

  const int n = p.ecSiteCount + 1;
  std::vector<NodeId> parent(n, kNoNode);
  for (int v = 1; v < n; ++v) parent[v] = (v - 1) / p.arity;

  std::vector<NodeId> leaves;
  for (int v = 1; v < n; ++v)
    if (static_cast<long long>(v) * p.arity + 1 >= n) leaves.push_back(v);
  if (p.activeCount > static_cast<int>(leaves.size()))
    throw ParameterError("generate_topology: activeCount " + std::to_string(p.activeCount) + " exceeds " +
                         std::to_string(leaves.size()) + " leaf EC sites");

  Rng rng = make_rng(p.seed, 0x70);
  std::vector<EcNode> ecs(n);
  for (int v = 1; v < n; ++v) {
    ecs[v].id = v;
    ecs[v].capacityUnits = p.capacityUnits;
    ecs[v].cores = static_cast<int>(uniform_int(rng, p.minCores, p.maxCores));
    ecs[v].cacheBytes = p.cacheBytes;
  }
  // partial Fisher-Yates over the leaf list
  for (int i = 0; i < p.activeCount; ++i) {
    auto j = i + static_cast<int>(uniform_index(rng, leaves.size() - i));
    std::swap(leaves[i], leaves[j]);
    ecs[leaves[i]].active = true;
  }
  return Topology(p.seed, p.arity, std::move(parent), std::move(ecs));
}

}  // namespace edgemar
