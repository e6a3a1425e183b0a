#pragma once

// Strict JSON run configuration. Every section and key is optional, unknown
// keys are rejected so a typo never silently falls back to a default.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgemar/error.hpp"
#include "edgemar/pipeline.hpp"

namespace edgemar {

struct SweepConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::map<std::string, std::vector<double>> axisValues{
      {"capacity", {10, 11, 12, 13, 14}},
      {"numEC", {5, 6, 7, 8}},
      {"numRequests", {20, 25, 30, 35, 40}},
      {"mobility", {1, 0}},
  };
  int timingRuns = 5;
};

struct RunConfig {
  ExperimentConfig experiment;
  SweepConfig sweep;
};

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"capacity", "numEC", "numRequests", "mobility"};
  return axes;
}

namespace detail {

class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParameterError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ParameterError("config: '" + path_ + key + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + key + ".");
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ParameterError("config: unknown key '" + path_ + k + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig rc;
  ExperimentConfig& e = rc.experiment;
  detail::Section root(j, "");
  root.get("seed", e.seed);

  if (root.has("topology")) {
    auto s = root.sub("topology");
    s.get("ecSites", e.topology.ecSiteCount);
    s.get("activeCount", e.topology.activeCount);
    s.get("arity", e.topology.arity);
    s.get("capacity", e.topology.capacityUnits);
    s.get("minCores", e.topology.minCores);
    s.get("maxCores", e.topology.maxCores);
    s.get("cacheBytes", e.topology.cacheBytes);
    s.finish();
  }
  if (root.has("delay")) {
    auto s = root.sub("delay");
    s.get("perHopMs", e.delay.perHopMs);
    s.get("workEta", e.delay.workEta);
    s.get("workRho", e.delay.workRho);
    s.get("cloudPenaltyMs", e.delay.cloudPenaltyMs);
    s.get("wComp", e.delay.wComp);
    s.get("wNet", e.delay.wNet);
    s.get("cloudCores", e.delay.cloudCores);
    s.finish();
  }
  if (root.has("workload")) {
    auto s = root.sub("workload");
    s.get("requestCount", e.workload.requestCount);
    s.get("aroMinBytes", e.workload.aroMinBytes);
    s.get("aroMaxBytes", e.workload.aroMaxBytes);
    s.get("minMoveMass", e.workload.minMoveMass);
    s.get("maxMoveMass", e.workload.maxMoveMass);
    s.get("mobility", e.workload.mobility);
    s.get("sharedAroPool", e.workload.sharedAroPool);
    s.finish();
  }
  if (root.has("train")) {
    auto s = root.sub("train");
    s.get("lr", e.train.initialLearnRate);
    s.get("epochs", e.train.maxEpochs);
    s.get("batch", e.train.batchSize);
    s.get("hidden", e.hidden);
    s.get("dropRate", e.dropRate);
    std::string enc = to_string(e.encoding);
    s.get("encoding", enc);
    e.encoding = parse_encoding(enc);
    s.finish();
  }
  if (root.has("experiment")) {
    auto s = root.sub("experiment");
    s.get("scenarios", e.scenarios);
    s.get("testFraction", e.testFraction);
    s.get("utilThreshold", e.utilThreshold);
    s.finish();
  }
  if (root.has("sweep")) {
    auto s = root.sub("sweep");
    s.get("seeds", rc.sweep.seeds);
    s.get("timingRuns", rc.sweep.timingRuns);
    if (s.has("axisValues")) {
      auto a = s.sub("axisValues");
      for (const auto& axis : sweep_axes()) a.get(axis.c_str(), rc.sweep.axisValues[axis]);
      a.finish();
    }
    s.finish();
  }
  root.finish();

  e.delay.validate();
  e.train.validate();
  if (e.hidden < 1) throw ParameterError("config: train.hidden must be >= 1");
  if (!(e.dropRate >= 0.0 && e.dropRate < 1.0)) throw ParameterError("config: train.dropRate must lie in [0,1)");
  if (e.scenarios < 1) throw ParameterError("config: experiment.scenarios must be >= 1");
  if (rc.sweep.seeds.empty()) throw ParameterError("config: sweep.seeds must not be empty");
  if (rc.sweep.timingRuns < 1) throw ParameterError("config: sweep.timingRuns must be >= 1");
  return rc;
}

}  // namespace edgemar
