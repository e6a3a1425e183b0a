// edgemar command-line front end.
//
//   edgemar_cli generate|solve|train|predict|sweep|timing [flags]
//
// Outputs go to --out (default $EDGEMAR_OUT, else the current directory).
// Failures print one JSON object on stderr and exit nonzero (2 for usage).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "edgemar/config.hpp"
#include "edgemar/heuristics.hpp"
#include "edgemar/io.hpp"
#include "edgemar/pipeline.hpp"
#include "edgemar/sweep.hpp"

namespace fs = std::filesystem;
using namespace edgemar;
using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string scheme = "optim";
  std::string axis;
  int parallel = 1;
  std::string topology;
  std::string requests;
  std::string dataset;
  std::string checkpoint;
  bool timings = false;
};

RunConfig load_config(const Flags& f) {
  RunConfig rc = f.config.empty() ? parse_config(json::object())
                                  : parse_config(io::parse_json(io::read_file(f.config), f.config));
  if (f.seed) rc.experiment.seed = *f.seed;
  return rc;
}

fs::path out_dir(const Flags& f) {
  fs::path dir = f.out;
  if (dir.empty()) {
    const char* env = std::getenv("EDGEMAR_OUT");
    dir = env && *env ? env : ".";
  }
  fs::create_directories(dir);
  return dir;
}

Topology topology_for(const Flags& f, const ExperimentConfig& e) {
  if (!f.topology.empty()) return io::topology_from_json(io::parse_json(io::read_file(f.topology), f.topology));
  TopologyParams tp = e.topology;
  tp.seed = e.seed;
  return generate_topology(tp);
}

std::vector<Request> requests_for(const Flags& f, const Topology& t, const ExperimentConfig& e) {
  if (!f.requests.empty()) return io::requests_from_lines(io::read_file(f.requests));
  return generate_requests(t, e.workload, e.seed);
}

void note(const fs::path& p) { std::cout << p.string() << "\n"; }

void write(const fs::path& p, const std::string& text) {
  io::write_file(p, text);
  note(p);
}

void cmd_generate(const Flags& f) {
  const auto rc = load_config(f);
  const auto dir = out_dir(f);
  const auto t = topology_for(f, rc.experiment);
  write(dir / "topology.json", io::to_json(t).dump(2) + "\n");
  write(dir / "requests.jsonl", io::requests_to_lines(requests_for(f, t, rc.experiment)));
}

void cmd_solve(const Flags& f) {
  const auto rc = load_config(f);
  const auto& e = rc.experiment;
  const auto dir = out_dir(f);
  const auto t = topology_for(f, e);
  const auto rs = requests_for(f, t, e);
  const auto start = std::chrono::steady_clock::now();
  SchemeResult res;
  if (f.scheme == "optim") res = optim(t, e.delay, rs, e.solver);
  else if (f.scheme == "exhaustive") res = detail::finish(t, e.delay, rs, solve_exhaustive(t, e.delay, rs, e.solver).plans);
  else if (f.scheme == "fact") res = fact(t, e.delay, rs, e.solver);
  else if (f.scheme == "cfs") res = cfs(t, e.delay, rs);
  else if (f.scheme == "util") res = util(t, e.delay, rs, e.utilThreshold);
  else if (f.scheme == "rands") res = rand_s(t, e.delay, rs, e.seed);
  else throw UsageError("unknown scheme '" + f.scheme + "' (expected optim, exhaustive, fact, cfs, util or rands)");
  const double wallMs = elapsed_ms(start);

  write(dir / ("plans_" + f.scheme + ".jsonl"), io::plans_to_lines(res.plans));
  json manifest = {{"scheme", f.scheme},
                   {"seed", e.seed},
                   {"requests", rs.size()},
                   {"objectiveMs", res.objectiveMs},
                   {"avgDelayMs", rs.empty() ? 0.0 : avg_service_delay(t, e.delay, rs, outcomes_of(e.delay, res.plans))},
                   {"cloudCount", res.cloudCount},
                   {"wallMs", wallMs}};
  write(dir / ("manifest_" + f.scheme + ".json"), manifest.dump(2) + "\n");
}

void cmd_train(const Flags& f) {
  const auto rc = load_config(f);
  const auto& e = rc.experiment;
  const auto dir = out_dir(f);
  const auto t = topology_for(f, e);
  Dataset ds;
  if (!f.dataset.empty()) {
    ds = io::dataset_from_lines(io::read_file(f.dataset));
  } else {
    const auto scenarios = solve_scenarios(scenario_seeds(e.seed, e.scenarios), t, e.delay, e.workload, e.solver);
    ds = build_dataset(scenarios, t, e.seed, e.testFraction);
    write(dir / "dataset.jsonl", io::dataset_to_lines(ds));
  }
  const auto trainSet = to_samples(t, ds.of(Split::Train), e.encoding);
  const auto valSet = to_samples(t, ds.of(Split::Test), e.encoding);
  seqnet::TrainConfig tc = e.train;
  tc.seed = e.seed;
  const int m = t.active_count();
  auto [model, trace] =
      seqnet::train(seqnet::init_model(t.leaf_count(), e.hidden, m * m, e.dropRate, e.seed), tc, trainSet, valSet);
  write(dir / "checkpoint.json", io::checkpoint_to_json(model, tc, e.encoding).dump() + "\n");
  write(dir / "trace.csv", io::trace_csv(trace));
}

void cmd_predict(const Flags& f) {
  if (f.checkpoint.empty()) throw UsageError("predict needs --checkpoint");
  const auto rc = load_config(f);
  const auto& e = rc.experiment;
  const auto dir = out_dir(f);
  const auto t = topology_for(f, e);
  const auto rs = requests_for(f, t, e);
  const auto ck = io::checkpoint_from_json(io::parse_json(io::read_file(f.checkpoint), f.checkpoint));
  if (ck.model.numRes != t.active_count() * t.active_count() || ck.model.inputWidth != t.leaf_count())
    throw ParameterError("predict: checkpoint shape does not match the topology");
  std::vector<RoutePlan> predicted;
  for (const auto& r : rs)
    predicted.push_back(make_plan(t, r, assignment_of(t, seqnet::predict(ck.model, encode_input(t, r, ck.encoding)))));
  const auto outcomes = feasibility_repair(t, e.delay, predicted, rs);
  std::vector<RoutePlan> repaired;
  json statuses = json::array();
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& o = outcomes[i];
    repaired.push_back(o.finalAssignment ? make_plan(t, rs[i], *o.finalAssignment) : make_cloud_plan(t, rs[i]));
    statuses.push_back({{"request", o.request}, {"status", to_string(o.status)}, {"penaltyMs", o.penaltyMs}});
  }
  write(dir / "plans_lstm.jsonl", io::plans_to_lines(repaired));
  json manifest = {{"scheme", "lstm"},
                   {"requests", rs.size()},
                   {"avgDelayMs", rs.empty() ? 0.0 : avg_service_delay(t, e.delay, rs, outcomes)},
                   {"repair", statuses}};
  write(dir / "manifest_lstm.json", manifest.dump(2) + "\n");
}

void cmd_sweep(const Flags& f) {
  if (f.axis.empty()) throw UsageError("sweep needs --axis");
  const auto rc = load_config(f);
  sweep_points(rc, f.axis);  // validate the axis before creating outputs
  const auto dir = out_dir(f);
  const auto res = run_sweep(rc, f.axis, f.parallel, f.timings);
  write(dir / ("sweep_" + f.axis + ".csv"), res.rows);
  write(dir / ("sweep_" + f.axis + "_mean.csv"), res.means);
}

void cmd_timing(const Flags& f) {
  const auto rc = load_config(f);
  const auto dir = out_dir(f);
  write(dir / "timing.csv", run_timing(rc));
}

int fail(const std::string& kind, const std::string& message, json extra = json::object()) {
  json j = {{"error", kind}, {"message", message}};
  j.update(extra);
  std::cerr << j.dump() << "\n";
  return kind == "usage" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgemar: mobility-aware service placement experiments"};
  app.require_subcommand(1, 1);
  Flags f;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run configuration");
    sub->add_option("--out", f.out, "output directory (default $EDGEMAR_OUT)");
    sub->add_option("--seed", f.seed, "master seed, overrides the config");
  };
  auto inputs = [&](CLI::App* sub) {
    sub->add_option("--topology", f.topology, "topology JSON instead of generating one");
    sub->add_option("--requests", f.requests, "requests JSON-lines instead of generating them");
  };
  auto* gen = app.add_subcommand("generate", "write topology.json and requests.jsonl");
  common(gen);
  auto* solve = app.add_subcommand("solve", "run one placement scheme");
  common(solve);
  inputs(solve);
  solve->add_option("--scheme", f.scheme, "optim|exhaustive|fact|cfs|util|rands");
  auto* train = app.add_subcommand("train", "train the sequence classifier");
  common(train);
  train->add_option("--dataset", f.dataset, "dataset JSON-lines (default: label fresh scenarios)");
  train->add_option("--topology", f.topology, "topology JSON the dataset was built on");
  auto* predict = app.add_subcommand("predict", "predict and repair placements from a checkpoint");
  common(predict);
  inputs(predict);
  predict->add_option("--checkpoint", f.checkpoint, "checkpoint JSON")->required();
  auto* sweep = app.add_subcommand("sweep", "metric CSV over one parameter axis");
  common(sweep);
  sweep->add_option("--axis", f.axis, "capacity|numEC|numRequests|mobility")->required();
  sweep->add_option("--parallel", f.parallel, "worker threads")->check(CLI::PositiveNumber);
  sweep->add_flag("--timings", f.timings, "keep wall-clock columns (breaks byte-identical reruns)");
  auto* timing = app.add_subcommand("timing", "decision and offline phase timings");
  common(timing);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (gen->parsed()) cmd_generate(f);
    else if (solve->parsed()) cmd_solve(f);
    else if (train->parsed()) cmd_train(f);
    else if (predict->parsed()) cmd_predict(f);
    else if (sweep->parsed()) cmd_sweep(f);
    else if (timing->parsed()) cmd_timing(f);
  } catch (const StageError& e) {
    return fail(e.kind(), e.what(), {{"stage", e.stage()}});
  } catch (const InfeasibleError& e) {
    return fail(e.kind(), e.what(), {{"binding", e.binding()}});
  } catch (const TrainingError& e) {
    return fail(e.kind(), e.what(), {{"epoch", e.epoch()}});
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
