#pragma once

// MAR requests: a source AR, a one-step mobility distribution over the
// adjacent ARs, and the ARO the storage-intensive function must cache.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edgemar/error.hpp"
#include "edgemar/random.hpp"
#include "edgemar/topology.hpp"

namespace edgemar {

using RequestId = int;

// Execution order of a decomposed MAR service: compute first, storage second.
enum class FunctionKind { ComputeIntensive, StorageIntensive };

struct Request {
  RequestId id = 0;
  NodeId source = kNoNode;
  std::map<NodeId, double> mobility;  // p_rij over adjacent ARs
  double stayProb = 1.0;
  long long aroId = 0;
  long long aroBytes = 0;
  int unitsPerFunction = 1;

  friend bool operator==(const Request&, const Request&) = default;
};

struct WorkloadParams {
  int requestCount = 30;
  long long aroMinBytes = 125830;  // ceil(0.12 MiB)
  long long aroMaxBytes = 2LL << 20;
  double minMoveMass = 0.5;
  double maxMoveMass = 1.0;
  bool mobility = true;    // false => stayProb = 1 for every request
  int sharedAroPool = 0;   // >0 => aroIds drawn from a pool of this size
  int unitsPerFunction = 1;
};

inline Request without_mobility(Request r) {
  r.mobility.clear();
  r.stayProb = 1.0;
  return r;
}

inline std::vector<Request> generate_requests(const Topology& t, const WorkloadParams& w, std::uint64_t seed) {
  if (w.requestCount < 1) throw ParameterError("generate_requests: count must be >= 1");
  if (w.aroMinBytes < 0 || w.aroMaxBytes < w.aroMinBytes) throw ParameterError("generate_requests: bad ARO range");
  if (!(w.minMoveMass >= 0.0 && w.maxMoveMass <= 1.0 && w.minMoveMass <= w.maxMoveMass))
    throw ParameterError("generate_requests: move mass range must lie in [0,1]");
  if (w.unitsPerFunction < 1) throw ParameterError("generate_requests: unitsPerFunction must be >= 1");

  Rng rng = make_rng(seed, 0x3E);
  // a shared ARO has one size wherever it is requested
  std::vector<long long> poolBytes(std::max(w.sharedAroPool, 0));
  for (auto& b : poolBytes) b = uniform_int(rng, w.aroMinBytes, w.aroMaxBytes);
  const auto& active = t.active_ecs();
  std::vector<Request> out;
  out.reserve(w.requestCount);
  for (int i = 0; i < w.requestCount; ++i) {
    Request r;
    r.id = i;
    r.source = active[uniform_index(rng, active.size())];
    r.unitsPerFunction = w.unitsPerFunction;
    const double sigma = uniform_real(rng, w.minMoveMass, w.maxMoveMass);
    const double split = uniform01(rng);
    const auto nbrs = t.adjacent_ars(r.source);
    if (nbrs.size() == 2) {
      const double left = sigma * split;
      r.mobility[nbrs[0]] = left;
      r.mobility[nbrs[1]] = sigma - left;
    } else if (nbrs.size() == 1) {
      r.mobility[nbrs[0]] = sigma;
    }
    r.stayProb = nbrs.empty() ? 1.0 : 1.0 - sigma;
    r.aroBytes = uniform_int(rng, w.aroMinBytes, w.aroMaxBytes);
    r.aroId = i;
    if (w.sharedAroPool > 0) {
      r.aroId = static_cast<long long>(uniform_index(rng, w.sharedAroPool));
      r.aroBytes = poolBytes[r.aroId];
    }
    if (!w.mobility) r = without_mobility(std::move(r));
    out.push_back(std::move(r));
  }
  return out;
}

// argmax over {source: stayProb} and the mobility map; ties go to the lowest
// leaf position.
inline NodeId most_likely_destination(const Topology& t, const Request& r) {
  NodeId best = r.source;
  double bestP = r.stayProb;
  for (const auto& [node, p] : r.mobility) {
    if (p > bestP || (p == bestP && t.leaf_position(node) < t.leaf_position(best))) {
      best = node;
      bestP = p;
    }
  }
  return best;
}

// Mobility distribution including the stay mass, keyed by node.
inline std::map<NodeId, double> destination_distribution(const Request& r) {
  auto d = r.mobility;
  d[r.source] += r.stayProb;
  return d;
}

inline void validate_request(const Topology& t, const Request& r, double tol = 1e-9) {
  if (!t.is_leaf(r.source)) throw ParameterError("request " + std::to_string(r.id) + ": source is not an AR");
  double sum = r.stayProb;
  if (r.stayProb < 0) throw ParameterError("request " + std::to_string(r.id) + ": negative stay probability");
  const auto nbrs = t.adjacent_ars(r.source);
  for (const auto& [node, p] : r.mobility) {
    if (p < 0) throw ParameterError("request " + std::to_string(r.id) + ": negative mobility probability");
    if (std::find(nbrs.begin(), nbrs.end(), node) == nbrs.end())
      throw ParameterError("request " + std::to_string(r.id) + ": mobility target is not adjacent");
    sum += p;
  }
  if (std::abs(sum - 1.0) > tol) throw ParameterError("request " + std::to_string(r.id) + ": probabilities do not sum to 1");
  if (r.unitsPerFunction < 1) throw ParameterError("request " + std::to_string(r.id) + ": unitsPerFunction < 1");
}

}  // namespace edgemar
