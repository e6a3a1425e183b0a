#pragma once

// Parameter sweeps and timing runs on top of run_experiment. Points and seeds
// run on a small worker pool; rows go through one appender keyed by job
// index, so the CSV does not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "edgemar/config.hpp"
#include "edgemar/io.hpp"
#include "edgemar/pipeline.hpp"

namespace edgemar {

struct SweepPoint {
  double value = 0.0;
  ExperimentConfig config;
};

// One experiment configuration per axis value; every other setting comes
// from the base config (defaults: 6 ECs, 30 requests, capacity 14).
inline std::vector<SweepPoint> sweep_points(const RunConfig& rc, const std::string& axis) {
  const auto& axes = sweep_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end())
    throw UsageError("unknown sweep axis '" + axis + "' (expected capacity, numEC, numRequests or mobility)");
  std::vector<SweepPoint> out;
  for (double v : rc.sweep.axisValues.at(axis)) {
    SweepPoint pt;
    pt.value = v;
    pt.config = rc.experiment;
    const int iv = static_cast<int>(std::lround(v));
    if (axis == "capacity") pt.config.topology.capacityUnits = iv;
    if (axis == "numEC") pt.config.topology.activeCount = iv;
    if (axis == "numRequests") pt.config.workload.requestCount = iv;
    if (axis == "mobility") pt.config.workload.mobility = iv != 0;
    out.push_back(pt);
  }
  return out;
}

namespace detail {

// Runs job(i) for i in [0, count) on `workers` threads; rethrows the first
// failure (lowest index) after every worker has stopped.
template <typename Job>
void run_jobs(std::size_t count, int workers, Job&& job) {
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr firstError;
  std::size_t firstIndex = count;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < firstIndex) {
          firstIndex = i;
          firstError = std::current_exception();
        }
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (firstError) std::rethrow_exception(firstError);
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  int n = 0;
  for (double x : xs)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

inline double std_error_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  int n = 0;
  for (double x : xs)
    if (!std::isnan(x)) {
      s += (x - m) * (x - m);
      ++n;
    }
  return n > 1 ? std::sqrt(s / (n - 1) / n) : 0.0;
}

}  // namespace detail

struct SweepOutput {
  std::string rows;   // one MetricReport row per (point, seed, scheme)
  std::string means;  // per (point, scheme) mean over seeds
  std::vector<std::vector<std::vector<MetricReport>>> reports;  // [point][seed][scheme]
};

inline SweepOutput run_sweep(const RunConfig& rc, const std::string& axis, int parallel = 1,
                             bool withTimings = false) {
  const auto points = sweep_points(rc, axis);
  const auto& seeds = rc.sweep.seeds;
  const std::size_t nSchemes = scheme_names().size();
  SweepOutput out;
  out.reports.assign(points.size(), std::vector<std::vector<MetricReport>>(seeds.size()));
  io::CsvAppender rows(io::metric_header());
  detail::run_jobs(points.size() * seeds.size(), parallel, [&](std::size_t job) {
    const std::size_t pi = job / seeds.size(), si = job % seeds.size();
    ExperimentConfig cfg = points[pi].config;
    cfg.seed = seeds[si];
    auto res = run_experiment(cfg);
    for (std::size_t k = 0; k < res.reports.size(); ++k) rows.add(job * nSchemes + k, io::metric_row(res.reports[k], withTimings));
    out.reports[pi][si] = std::move(res.reports);
  });
  out.rows = rows.str();

  std::string means = "axis,value,scheme,seeds,avgDelayMs,avgDelayStdErr,rmse,relErrPct,rSquared,accuracyPct,repairCloudCount\n";
  for (std::size_t pi = 0; pi < points.size(); ++pi)
    for (std::size_t k = 0; k < nSchemes; ++k) {
      std::vector<double> delay, rm, rel, r2, acc, cloud;
      for (const auto& perSeed : out.reports[pi]) {
        const auto& r = perSeed[k];
        delay.push_back(r.avgDelayMs);
        rm.push_back(r.rmse);
        rel.push_back(r.relErrPct);
        r2.push_back(r.rSquared);
        acc.push_back(r.accuracyPct);
        cloud.push_back(r.repairCloudCount);
      }
      means += axis + "," + io::format_number(points[pi].value, 0) + "," + scheme_names()[k] + "," +
               std::to_string(seeds.size()) + "," + io::format_number(detail::mean_of(delay)) + "," +
               io::format_number(detail::std_error_of(delay)) + "," + io::format_number(detail::mean_of(rm)) + "," +
               io::format_number(detail::mean_of(rel)) + "," + io::format_number(detail::mean_of(r2)) + "," +
               io::format_number(detail::mean_of(acc)) + "," + io::format_number(detail::mean_of(cloud), 3) + "\n";
    }
  out.means = std::move(means);
  return out;
}

// Per-scheme decision time per scenario plus the two offline phases, over
// `timingRuns` experiments with consecutive master seeds.
inline std::string run_timing(const RunConfig& rc) {
  std::map<std::string, std::vector<double>> samples;
  std::vector<std::string> order;
  auto add = [&](const std::string& k, double v) {
    if (!samples.count(k)) order.push_back(k);
    samples[k].push_back(v);
  };
  for (int run = 0; run < rc.sweep.timingRuns; ++run) {
    ExperimentConfig cfg = rc.experiment;
    cfg.seed = rc.experiment.seed + static_cast<std::uint64_t>(run);
    const auto res = run_experiment(cfg);
    for (const auto& r : res.reports) add(r.scheme, r.scheme == "lstm" ? r.inferMs : r.solveMs);
    add("offline:optimalSolutions", res.reports.back().solveMs);
    add("offline:training", res.reports.back().trainMs);
  }
  std::string out = "phase,meanMs,stdMs,runs\n";
  for (const auto& k : order) {
    const auto& xs = samples[k];
    const double m = detail::mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    const double sd = xs.size() > 1 ? std::sqrt(s / static_cast<double>(xs.size() - 1)) : 0.0;
    out += k + "," + io::format_number(m, 4) + "," + io::format_number(sd, 4) + "," + std::to_string(xs.size()) + "\n";
  }
  return out;
}

}  // namespace edgemar
