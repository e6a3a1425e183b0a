#pragma once

// The end-to-end working process: label scenarios with the optimiser, split
// into train/test, train the sequence classifier, predict, repair the
// predictions against the live network state and score every scheme.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "edgemar/error.hpp"
#include "edgemar/heuristics.hpp"
#include "edgemar/placement.hpp"
#include "edgemar/random.hpp"
#include "edgemar/seqnet.hpp"
#include "edgemar/solver.hpp"
#include "edgemar/topology.hpp"
#include "edgemar/workload.hpp"

namespace edgemar {

// ---------------------------------------------------------------- dataset

enum class InputEncoding {
  OneHot,        // step 1 = one-hot(s), step 2 = one-hot(d)
  Distribution,  // step 1 = one-hot(s), step 2 = destination distribution (argmax = d)
};

inline std::string to_string(InputEncoding e) { return e == InputEncoding::OneHot ? "onehot" : "distribution"; }

inline InputEncoding parse_encoding(const std::string& s) {
  if (s == "onehot") return InputEncoding::OneHot;
  if (s == "distribution") return InputEncoding::Distribution;
  throw ParameterError("unknown input encoding '" + s + "'");
}

enum class Split { Train, Test };

struct DatasetEntry {
  std::uint64_t scenarioSeed = 0;
  RequestId requestId = 0;
  NodeId source = kNoNode;       // x[0]
  NodeId destination = kNoNode;  // x[1]
  std::map<NodeId, double> destDist;
  int classIndex = 1;  // y
  Split split = Split::Train;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

struct Dataset {
  std::vector<DatasetEntry> entries;

  std::vector<const DatasetEntry*> of(Split s) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(&e);
    return out;
  }
};

// One solved scenario: fresh requests on the shared topology plus the optimum.
struct Scenario {
  std::uint64_t seed = 0;
  std::vector<Request> requests;
  SolveResult optimal;
  double solveMs = 0.0;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

inline std::vector<Scenario> solve_scenarios(const std::vector<std::uint64_t>& seeds, const Topology& t,
                                             const DelayParams& p, const WorkloadParams& w,
                                             const SolverOptions& opt = {}) {
  std::vector<Scenario> out;
  for (auto seed : seeds) {
    Scenario sc;
    sc.seed = seed;
    sc.requests = generate_requests(t, w, seed);
    const auto start = std::chrono::steady_clock::now();
    try {
      sc.optimal = solve_optimal(t, p, sc.requests, opt);
    } catch (const InfeasibleError& e) {
      throw InfeasibleError(e.binding(), "scenario " + std::to_string(seed) + ": " + e.what());
    }
    sc.solveMs = elapsed_ms(start);
    out.push_back(std::move(sc));
  }
  return out;
}

// Test share is floor(testFraction * n); the rest is training data.
inline Dataset build_dataset(const std::vector<Scenario>& scenarios, const Topology& t, std::uint64_t datasetSeed,
                             double testFraction = 0.1) {
  if (!(testFraction >= 0.0 && testFraction < 1.0)) throw ParameterError("build_dataset: test fraction must lie in [0,1)");
  Dataset ds;
  for (const auto& sc : scenarios) {
    for (std::size_t i = 0; i < sc.requests.size(); ++i) {
      const Request& r = sc.requests[i];
      const RoutePlan& plan = sc.optimal.plans.at(i);
      DatasetEntry e;
      e.scenarioSeed = sc.seed;
      e.requestId = r.id;
      e.source = plan.route[0];
      e.destination = plan.route[3];
      e.destDist = destination_distribution(r);
      e.classIndex = plan.classIndex;
      ds.entries.push_back(std::move(e));
    }
  }
  Rng rng = make_rng(datasetSeed, 0xD5);
  shuffle(ds.entries, rng);
  const auto nTest = static_cast<std::size_t>(std::floor(testFraction * static_cast<double>(ds.entries.size()) + 1e-9));
  for (std::size_t i = 0; i < ds.entries.size(); ++i)
    ds.entries[i].split = i + nTest >= ds.entries.size() ? Split::Test : Split::Train;
  (void)t;
  return ds;
}

inline Dataset build_dataset(const std::vector<std::uint64_t>& scenarioSeeds, const Topology& t, const DelayParams& p,
                             const WorkloadParams& w, std::uint64_t datasetSeed, double testFraction = 0.1) {
  return build_dataset(solve_scenarios(scenarioSeeds, t, p, w), t, datasetSeed, testFraction);
}

inline seqnet::Sequence encode_input(const Topology& t, NodeId source, NodeId destination,
                                     const std::map<NodeId, double>& destDist, InputEncoding enc) {
  const int width = t.leaf_count();
  seqnet::Sequence x(2, seqnet::Vector(width, 0.0));
  x[0][t.leaf_position(source)] = 1.0;
  if (enc == InputEncoding::OneHot) {
    x[1][t.leaf_position(destination)] = 1.0;
  } else {
    for (const auto& [node, prob] : destDist) x[1][t.leaf_position(node)] += prob;
  }
  return x;
}

inline seqnet::Sequence encode_input(const Topology& t, const DatasetEntry& e, InputEncoding enc) {
  return encode_input(t, e.source, e.destination, e.destDist, enc);
}

inline seqnet::Sequence encode_input(const Topology& t, const Request& r, InputEncoding enc) {
  return encode_input(t, r.source, most_likely_destination(t, r), destination_distribution(r), enc);
}

inline std::vector<seqnet::Sample> to_samples(const Topology& t, const std::vector<const DatasetEntry*>& entries,
                                              InputEncoding enc) {
  std::vector<seqnet::Sample> out;
  out.reserve(entries.size());
  for (const auto* e : entries) out.push_back({encode_input(t, *e, enc), e->classIndex});
  return out;
}

// ---------------------------------------------------------------- repair

enum class RepairStatus { Direct, NeighborBackup, Cloud };

inline std::string to_string(RepairStatus s) {
  switch (s) {
    case RepairStatus::Direct: return "direct";
    case RepairStatus::NeighborBackup: return "neighborBackup";
    case RepairStatus::Cloud: return "cloud";
  }
  return "?";
}

struct RepairOutcome {
  RequestId request = 0;
  RepairStatus status = RepairStatus::Direct;
  std::optional<Assignment> finalAssignment;  // empty for cloud
  double penaltyMs = 0.0;
};

struct RepairResult {
  std::vector<RepairOutcome> outcomes;  // ascending request id
  LoadLedger ledger;
};

// Puts predictions back into the network in ascending request id. A
// prediction that fits is kept. Otherwise each violating function is retried
// at the active ECs adjacent to its predicted EC, least loaded first; if some
// function finds no room the whole request goes to the cloud.
inline RepairResult feasibility_repair_with_ledger(const Topology& t, const DelayParams& p,
                                                   const std::vector<RoutePlan>& predictions,
                                                   const std::vector<Request>& requests) {
  std::map<RequestId, const RoutePlan*> byId;
  for (const auto& pl : predictions) byId[pl.request] = &pl;
  RepairResult res;
  LoadLedger& ledger = res.ledger;
  std::vector<const Request*> ordered;
  for (const auto& r : requests) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(), [](const Request* a, const Request* b) { return a->id < b->id; });

  auto least_loaded_first = [&](NodeId ec) {
    auto nbrs = t.adjacent_active_ecs(ec);
    std::stable_sort(nbrs.begin(), nbrs.end(), [&](NodeId a, NodeId b) {
      if (ledger.units(a) != ledger.units(b)) return ledger.units(a) < ledger.units(b);
      return t.leaf_position(a) < t.leaf_position(b);
    });
    return nbrs;
  };

  for (const Request* rp : ordered) {
    const Request& r = *rp;
    auto it = byId.find(r.id);
    if (it == byId.end()) throw ParameterError("feasibility_repair: no prediction for request " + std::to_string(r.id));
    const RoutePlan& pred = *it->second;
    RepairOutcome out;
    out.request = r.id;
    std::optional<Assignment> chosen;
    if (!pred.cloud && t.is_active(pred.route[1]) && t.is_active(pred.route[2])) {
      const Assignment want = pred.assignment();
      if (!check_assignment(t, ledger, r, want)) {
        chosen = want;
        out.status = RepairStatus::Direct;
      } else {
        const int u = r.unitsPerFunction;
        NodeId eta = kNoNode;
        if (ledger.units(want.lEta) + u <= t.ec(want.lEta).capacityUnits) {
          eta = want.lEta;
        } else {
          for (NodeId nb : least_loaded_first(want.lEta))
            if (ledger.units(nb) + u <= t.ec(nb).capacityUnits) {
              eta = nb;
              break;
            }
        }
        if (eta != kNoNode) {
          auto rhoFits = [&](NodeId h) {
            const int used = ledger.units(h) + (h == eta ? u : 0);
            return used + u <= t.ec(h).capacityUnits &&
                   ledger.cached_bytes(h) + added_cache_bytes(ledger, h, r) <= t.ec(h).cacheBytes;
          };
          NodeId rho = kNoNode;
          if (rhoFits(want.lRho)) {
            rho = want.lRho;
          } else {
            for (NodeId nb : least_loaded_first(want.lRho))
              if (rhoFits(nb)) {
                rho = nb;
                break;
              }
          }
          if (rho != kNoNode) {
            chosen = Assignment{eta, rho};
            out.status = RepairStatus::NeighborBackup;
          }
        }
      }
    }
    if (chosen) {
      commit_assignment(ledger, r, *chosen);
      out.finalAssignment = chosen;
    } else {
      out.status = RepairStatus::Cloud;
      out.penaltyMs = p.cloudPenaltyMs;
    }
    res.outcomes.push_back(out);
  }
  return res;
}

inline std::vector<RepairOutcome> feasibility_repair(const Topology& t, const DelayParams& p,
                                                     const std::vector<RoutePlan>& predictions,
                                                     const std::vector<Request>& requests) {
  return feasibility_repair_with_ledger(t, p, predictions, requests).outcomes;
}

// Outcomes for a plan that is already feasible (heuristics, optimiser).
inline std::vector<RepairOutcome> outcomes_of(const DelayParams& p, const std::vector<RoutePlan>& plans) {
  std::vector<RepairOutcome> out;
  for (const auto& pl : plans) {
    RepairOutcome o;
    o.request = pl.request;
    if (pl.cloud) {
      o.status = RepairStatus::Cloud;
      o.penaltyMs = p.cloudPenaltyMs;
    } else {
      o.finalAssignment = pl.assignment();
    }
    out.push_back(o);
  }
  return out;
}

// ---------------------------------------------------------------- metrics

namespace detail {
inline void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw ParameterError(std::string(what) + ": length mismatch");
  if (a.empty()) throw ParameterError(std::string(what) + ": empty input");
}
}  // namespace detail

inline double rmse(std::span<const double> yTest, std::span<const double> yPred) {
  detail::check_pair(yTest, yPred, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < yTest.size(); ++i) s += (yTest[i] - yPred[i]) * (yTest[i] - yPred[i]);
  return std::sqrt(s / static_cast<double>(yTest.size()));
}

// Mean |yTest/yPred - 1| in percent.
inline double rel_error(std::span<const double> yTest, std::span<const double> yPred) {
  detail::check_pair(yTest, yPred, "rel_error");
  double s = 0.0;
  for (std::size_t i = 0; i < yTest.size(); ++i) {
    if (yPred[i] == 0.0) throw ParameterError("rel_error: predicted value is zero");
    s += std::abs(yTest[i] / yPred[i] - 1.0);
  }
  return s / static_cast<double>(yTest.size()) * 100.0;
}

inline double r_squared(std::span<const double> yTest, std::span<const double> yPred) {
  detail::check_pair(yTest, yPred, "r_squared");
  const double mean = std::accumulate(yTest.begin(), yTest.end(), 0.0) / static_cast<double>(yTest.size());
  double ssRes = 0.0, ssTot = 0.0;
  for (std::size_t i = 0; i < yTest.size(); ++i) {
    ssRes += (yTest[i] - yPred[i]) * (yTest[i] - yPred[i]);
    ssTot += (yTest[i] - mean) * (yTest[i] - mean);
  }
  if (ssTot == 0.0) throw ParameterError("r_squared: undefined for constant yTest");
  return 1.0 - ssRes / ssTot;
}

inline double avg_service_delay(const Topology& t, const DelayParams& p, const std::vector<Request>& requests,
                                const std::vector<RepairOutcome>& outcomes) {
  if (requests.empty()) throw ParameterError("avg_service_delay: no requests");
  std::map<RequestId, const RepairOutcome*> byId;
  for (const auto& o : outcomes) byId[o.request] = &o;
  double sum = 0.0;
  for (const auto& r : requests) {
    auto it = byId.find(r.id);
    if (it == byId.end()) throw ParameterError("avg_service_delay: missing outcome for request " + std::to_string(r.id));
    const RepairOutcome& o = *it->second;
    sum += o.status == RepairStatus::Cloud ? cloud_delay(t, p, r) : expected_delay(t, p, r, *o.finalAssignment);
  }
  return sum / static_cast<double>(requests.size());
}

// ---------------------------------------------------------------- experiment

struct ExperimentConfig {
  std::uint64_t seed = 1;
  TopologyParams topology;
  DelayParams delay;
  WorkloadParams workload;
  SolverOptions solver;
  seqnet::TrainConfig train;
  int hidden = 80;
  double dropRate = 0.05;
  InputEncoding encoding = InputEncoding::Distribution;
  int scenarios = 5;
  double testFraction = 0.1;
  double utilThreshold = 0.8;
};

struct MetricReport {
  std::string scheme;
  std::uint64_t seed = 0;
  int numEC = 0;
  int numRequests = 0;
  int capacity = 0;
  double avgDelayMs = 0.0;
  double rmse = 0.0;
  double relErrPct = 0.0;
  double rSquared = 0.0;
  double accuracyPct = 0.0;
  double solveMs = 0.0;
  double trainMs = 0.0;
  double inferMs = 0.0;
  int repairCloudCount = 0;
};

struct ExperimentResult {
  std::vector<MetricReport> reports;  // optim, fact, cfs, util, rands, lstm
  seqnet::TrainingTrace trace;
  Dataset dataset;
  seqnet::ModelParams model;
};

inline const std::vector<std::string>& scheme_names() {
  static const std::vector<std::string> names{"optim", "fact", "cfs", "util", "rands", "lstm"};
  return names;
}

// Scenario seeds derived from the master seed.
inline std::vector<std::uint64_t> scenario_seeds(std::uint64_t master, int count) {
  std::vector<std::uint64_t> out;
  Rng rng = make_rng(master, 0x5C);
  for (int i = 0; i < count; ++i) out.push_back(rng() >> 16);
  return out;
}

namespace detail {

// rmse / delta / r^2 / accuracy of `pred` against `truth` over entries where
// the scheme produced an EC class (cloud plans carry none).
inline void score_classes(const std::vector<int>& truth, const std::vector<int>& pred, MetricReport& row) {
  std::vector<double> yt, yp;
  int hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] < 1) continue;
    yt.push_back(truth[i]);
    yp.push_back(pred[i]);
    hits += truth[i] == pred[i] ? 1 : 0;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (yt.empty()) {
    row.rmse = row.relErrPct = row.rSquared = row.accuracyPct = nan;
    return;
  }
  row.rmse = rmse(yt, yp);
  row.relErrPct = rel_error(yt, yp);
  try {
    row.rSquared = r_squared(yt, yp);
  } catch (const ParameterError&) {
    row.rSquared = nan;
  }
  row.accuracyPct = 100.0 * hits / static_cast<double>(truth.size());
}

template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult out;
  TopologyParams tp = cfg.topology;
  tp.seed = cfg.seed;
  const Topology topo = detail::run_stage("generate", [&] { return generate_topology(tp); });
  const DelayParams& p = cfg.delay;
  const int m = topo.active_count();

  auto t0 = std::chrono::steady_clock::now();
  const auto seeds = scenario_seeds(cfg.seed, cfg.scenarios);
  const auto scenarios =
      detail::run_stage("solve", [&] { return solve_scenarios(seeds, topo, p, cfg.workload, cfg.solver); });
  const double labelMs = elapsed_ms(t0);

  out.dataset = detail::run_stage("dataset", [&] { return build_dataset(scenarios, topo, cfg.seed, cfg.testFraction); });
  const auto trainEntries = out.dataset.of(Split::Train);
  const auto testEntries = out.dataset.of(Split::Test);
  const auto trainSet = to_samples(topo, trainEntries, cfg.encoding);
  const auto testSet = to_samples(topo, testEntries, cfg.encoding);

  t0 = std::chrono::steady_clock::now();
  {
    auto trained = detail::run_stage("train", [&] {
      seqnet::TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      auto model = seqnet::init_model(topo.leaf_count(), cfg.hidden, m * m, cfg.dropRate, cfg.seed);
      return seqnet::train(std::move(model), tc, trainSet, testSet);
    });
    out.model = std::move(trained.first);
    out.trace = std::move(trained.second);
  }
  const double trainMs = elapsed_ms(t0);

  // class per (scenario index, request id) for every scheme
  std::map<std::string, std::vector<std::vector<int>>> classes;
  std::map<std::string, MetricReport> rows;
  for (const auto& name : scheme_names()) {
    MetricReport row;
    row.scheme = name;
    row.seed = cfg.seed;
    row.numEC = m;
    row.numRequests = cfg.workload.requestCount;
    row.capacity = cfg.topology.capacityUnits;
    rows[name] = row;
  }
  auto record = [&](const std::string& name, std::size_t sIdx, const std::vector<RoutePlan>& plans,
                    const std::vector<RepairOutcome>& outcomes, double decideMs, const Scenario& sc) {
    auto& row = rows[name];
    row.avgDelayMs += avg_service_delay(topo, p, sc.requests, outcomes) / static_cast<double>(scenarios.size());
    row.solveMs += decideMs / static_cast<double>(scenarios.size());
    for (const auto& o : outcomes) row.repairCloudCount += o.status == RepairStatus::Cloud ? 1 : 0;
    auto& cls = classes[name];
    cls.resize(scenarios.size());
    cls[sIdx].resize(plans.size());
    for (const auto& pl : plans) cls[sIdx][pl.request] = pl.cloud ? 0 : pl.classIndex;
  };

  detail::run_stage("evaluate", [&] {
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      const Scenario& sc = scenarios[s];
      record("optim", s, sc.optimal.plans, outcomes_of(p, sc.optimal.plans), sc.solveMs, sc);

      auto time_scheme = [&](const std::string& name, auto&& fn) {
        const auto start = std::chrono::steady_clock::now();
        SchemeResult res = fn();
        const double ms = elapsed_ms(start);
        record(name, s, res.plans, outcomes_of(p, res.plans), ms, sc);
      };
      time_scheme("fact", [&] { return fact(topo, p, sc.requests, cfg.solver); });
      time_scheme("cfs", [&] { return cfs(topo, p, sc.requests); });
      time_scheme("util", [&] { return util(topo, p, sc.requests, cfg.utilThreshold); });
      time_scheme("rands", [&] { return rand_s(topo, p, sc.requests, sc.seed); });

      // LSTM: predict every request of the scenario, then repair
      const auto start = std::chrono::steady_clock::now();
      std::vector<RoutePlan> predicted;
      predicted.reserve(sc.requests.size());
      for (const auto& r : sc.requests) {
        const int c = seqnet::predict(out.model, encode_input(topo, r, cfg.encoding));
        predicted.push_back(make_plan(topo, r, assignment_of(topo, c)));
      }
      const auto outcomes = feasibility_repair(topo, p, predicted, sc.requests);
      const double inferMs = elapsed_ms(start);
      record("lstm", s, predicted, outcomes, 0.0, sc);
      rows["lstm"].inferMs += inferMs / static_cast<double>(scenarios.size());
    }
    return 0;
  });
  rows["lstm"].solveMs = labelMs;
  rows["lstm"].trainMs = trainMs;

  // prediction quality on the held-out entries
  std::map<std::uint64_t, std::size_t> scenarioIndex;
  for (std::size_t s = 0; s < scenarios.size(); ++s) scenarioIndex[scenarios[s].seed] = s;
  std::vector<int> truth;
  for (const auto* e : testEntries) truth.push_back(e->classIndex);
  for (const auto& name : scheme_names()) {
    std::vector<int> pred;
    for (const auto* e : testEntries) pred.push_back(classes[name][scenarioIndex.at(e->scenarioSeed)][e->requestId]);
    if (truth.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rows[name].rmse = rows[name].relErrPct = rows[name].rSquared = rows[name].accuracyPct = nan;
    } else {
      detail::score_classes(truth, pred, rows[name]);
    }
    out.reports.push_back(rows[name]);
  }
  return out;
}

}  // namespace edgemar
