#pragma once

// JSON / JSON-lines / CSV interchange for topologies, requests, plans,
// datasets, model checkpoints and metric rows.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgemar/error.hpp"
#include "edgemar/pipeline.hpp"
#include "edgemar/placement.hpp"
#include "edgemar/seqnet.hpp"
#include "edgemar/topology.hpp"
#include "edgemar/workload.hpp"

namespace edgemar::io {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParameterError("cannot write " + path.string());
  out << text;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParameterError(what + ": " + e.what());
  }
}

inline std::vector<json> parse_lines(const std::string& text, const std::string& what) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(parse_json(line, what));
  return out;
}

template <typename T, typename F>
std::string to_lines(const std::vector<T>& items, F&& to_json) {
  std::string out;
  for (const auto& it : items) out += to_json(it).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------- topology

inline json to_json(const Topology& t) {
  json nodes = json::array();
  for (int v = 0; v < t.node_count(); ++v)
    nodes.push_back({{"id", v},
                     {"parent", t.parent(v)},
                     {"isLeaf", t.is_leaf(v)},
                     {"leafPos", t.is_leaf(v) ? t.leaf_position(v) : -1}});
  json ecs = json::array();
  for (const auto& e : t.ecs())
    if (e.id != kNoNode)
      ecs.push_back({{"id", e.id},
                     {"capacityUnits", e.capacityUnits},
                     {"cores", e.cores},
                     {"cacheBytes", e.cacheBytes},
                     {"active", e.active}});
  return {{"seed", t.seed()}, {"arity", t.arity()}, {"nodes", nodes}, {"ecs", ecs}};
}

inline Topology topology_from_json(const json& j) {
  try {
    const auto& nodes = j.at("nodes");
    std::vector<NodeId> parent(nodes.size(), kNoNode);
    for (const auto& n : nodes) {
      const int id = n.at("id").get<int>();
      if (id < 0 || id >= static_cast<int>(parent.size())) throw ParameterError("topology: node id out of range");
      parent[id] = n.at("parent").get<int>();
    }
    std::vector<EcNode> ecs(nodes.size());
    for (const auto& e : j.at("ecs")) {
      EcNode ec;
      ec.id = e.at("id").get<int>();
      if (ec.id <= 0 || ec.id >= static_cast<int>(ecs.size())) throw ParameterError("topology: EC id out of range");
      ec.capacityUnits = e.at("capacityUnits").get<int>();
      ec.cores = e.at("cores").get<int>();
      ec.cacheBytes = e.at("cacheBytes").get<long long>();
      ec.active = e.at("active").get<bool>();
      ecs[ec.id] = ec;
    }
    return Topology(j.at("seed").get<std::uint64_t>(), j.at("arity").get<int>(), std::move(parent), std::move(ecs));
  } catch (const json::exception& e) {
    throw ParameterError(std::string("topology json: ") + e.what());
  }
}

// ---------------------------------------------------------------- requests

inline json to_json(const Request& r) {
  json mob = json::object();
  for (const auto& [node, p] : r.mobility) mob[std::to_string(node)] = p;
  return {{"id", r.id},         {"source", r.source}, {"stayProb", r.stayProb},
          {"mobility", mob},    {"aroId", r.aroId},   {"aroBytes", r.aroBytes},
          {"unitsPerFunction", r.unitsPerFunction}};
}

inline Request request_from_json(const json& j) {
  try {
    Request r;
    r.id = j.at("id").get<int>();
    r.source = j.at("source").get<int>();
    r.stayProb = j.at("stayProb").get<double>();
    for (const auto& [k, v] : j.at("mobility").items()) r.mobility[std::stoi(k)] = v.get<double>();
    r.aroId = j.at("aroId").get<long long>();
    r.aroBytes = j.at("aroBytes").get<long long>();
    r.unitsPerFunction = j.value("unitsPerFunction", 1);
    return r;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("request json: ") + e.what());
  }
}

inline std::string requests_to_lines(const std::vector<Request>& rs) {
  return to_lines(rs, [](const Request& r) { return to_json(r); });
}

inline std::vector<Request> requests_from_lines(const std::string& text) {
  std::vector<Request> out;
  for (const auto& j : parse_lines(text, "requests")) out.push_back(request_from_json(j));
  return out;
}

// ---------------------------------------------------------------- plans

inline json to_json(const RoutePlan& p) {
  json j = {{"request", p.request}, {"route", p.route}, {"classIndex", p.classIndex}};
  if (p.cloud) j["cloud"] = true;
  return j;
}

inline RoutePlan plan_from_json(const json& j) {
  try {
    RoutePlan p;
    p.request = j.at("request").get<int>();
    p.route = j.at("route").get<std::array<NodeId, 4>>();
    p.classIndex = j.at("classIndex").get<int>();
    p.cloud = j.value("cloud", false);
    return p;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("plan json: ") + e.what());
  }
}

inline std::string plans_to_lines(const std::vector<RoutePlan>& ps) {
  return to_lines(ps, [](const RoutePlan& p) { return to_json(p); });
}

inline std::vector<RoutePlan> plans_from_lines(const std::string& text) {
  std::vector<RoutePlan> out;
  for (const auto& j : parse_lines(text, "plans")) out.push_back(plan_from_json(j));
  return out;
}

// ---------------------------------------------------------------- dataset

inline json to_json(const DatasetEntry& e) {
  json dist = json::object();
  for (const auto& [node, p] : e.destDist) dist[std::to_string(node)] = p;
  return {{"scenarioSeed", e.scenarioSeed},
          {"requestId", e.requestId},
          {"x", {e.source, e.destination}},
          {"destDist", dist},
          {"y", e.classIndex},
          {"split", e.split == Split::Train ? "train" : "test"}};
}

inline DatasetEntry dataset_entry_from_json(const json& j) {
  try {
    DatasetEntry e;
    e.scenarioSeed = j.at("scenarioSeed").get<std::uint64_t>();
    e.requestId = j.at("requestId").get<int>();
    const auto x = j.at("x").get<std::vector<int>>();
    if (x.size() != 2) throw ParameterError("dataset entry: x must hold [source, destination]");
    e.source = x[0];
    e.destination = x[1];
    for (const auto& [k, v] : j.at("destDist").items()) e.destDist[std::stoi(k)] = v.get<double>();
    e.classIndex = j.at("y").get<int>();
    const auto split = j.at("split").get<std::string>();
    if (split != "train" && split != "test") throw ParameterError("dataset entry: split must be train or test");
    e.split = split == "train" ? Split::Train : Split::Test;
    return e;
  } catch (const json::exception& ex) {
    throw ParameterError(std::string("dataset json: ") + ex.what());
  }
}

inline std::string dataset_to_lines(const Dataset& d) {
  return to_lines(d.entries, [](const DatasetEntry& e) { return to_json(e); });
}

inline Dataset dataset_from_lines(const std::string& text) {
  Dataset d;
  for (const auto& j : parse_lines(text, "dataset")) d.entries.push_back(dataset_entry_from_json(j));
  return d;
}

// ---------------------------------------------------------------- checkpoint

inline constexpr int kCheckpointSchema = 1;

inline json to_json(const seqnet::Matrix& m) { return {{"shape", {m.rows, m.cols}}, {"values", m.data}}; }

inline seqnet::Matrix matrix_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<int>>();
  if (shape.size() != 2) throw ParameterError("checkpoint: matrix shape must have 2 dims");
  seqnet::Matrix m(shape[0], shape[1]);
  m.data = j.at("values").get<std::vector<double>>();
  if (m.data.size() != static_cast<std::size_t>(shape[0]) * shape[1]) throw ParameterError("checkpoint: value count mismatch");
  return m;
}

inline json layer_to_json(const seqnet::LstmLayerParams& l) {
  return {{"inputSize", l.inputSize}, {"hiddenSize", l.hiddenSize}, {"W", to_json(l.W)}, {"U", to_json(l.U)}, {"b", l.b}};
}

inline seqnet::LstmLayerParams layer_from_json(const json& j) {
  seqnet::LstmLayerParams l;
  l.inputSize = j.at("inputSize").get<int>();
  l.hiddenSize = j.at("hiddenSize").get<int>();
  l.W = matrix_from_json(j.at("W"));
  l.U = matrix_from_json(j.at("U"));
  l.b = j.at("b").get<std::vector<double>>();
  if (l.W.rows != 4 * l.hiddenSize || l.W.cols != l.inputSize || l.U.rows != 4 * l.hiddenSize ||
      l.U.cols != l.hiddenSize || static_cast<int>(l.b.size()) != 4 * l.hiddenSize)
    throw ParameterError("checkpoint: inconsistent LSTM layer shapes");
  return l;
}

// doubles are written in shortest round-trip form, so load(save(m)) == m bit for bit
inline json checkpoint_to_json(const seqnet::ModelParams& m, const seqnet::TrainConfig& cfg, InputEncoding enc) {
  return {{"schemaVersion", kCheckpointSchema},
          {"inputWidth", m.inputWidth},
          {"sequenceLength", m.sequenceLength},
          {"numRes", m.numRes},
          {"dropRate", m.dropRate},
          {"encoding", to_string(enc)},
          {"seed", cfg.seed},
          {"cfg",
           {{"lr", cfg.initialLearnRate},
            {"epochs", cfg.maxEpochs},
            {"batch", cfg.batchSize},
            {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},
            {"epsilon", cfg.epsilon}}},
          {"layer1", layer_to_json(m.layer1)},
          {"layer2", layer_to_json(m.layer2)},
          {"fcWeight", to_json(m.fcWeight)},
          {"fcBias", m.fcBias}};
}

struct Checkpoint {
  seqnet::ModelParams model;
  seqnet::TrainConfig cfg;
  InputEncoding encoding = InputEncoding::Distribution;
};

inline Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.at("schemaVersion").get<int>() != kCheckpointSchema) throw ParameterError("checkpoint: unsupported schemaVersion");
    Checkpoint c;
    auto& m = c.model;
    m.inputWidth = j.at("inputWidth").get<int>();
    m.sequenceLength = j.at("sequenceLength").get<int>();
    m.numRes = j.at("numRes").get<int>();
    m.dropRate = j.at("dropRate").get<double>();
    m.layer1 = layer_from_json(j.at("layer1"));
    m.layer2 = layer_from_json(j.at("layer2"));
    m.fcWeight = matrix_from_json(j.at("fcWeight"));
    m.fcBias = j.at("fcBias").get<std::vector<double>>();
    if (m.layer1.inputSize != m.inputWidth || m.layer2.inputSize != m.layer1.hiddenSize ||
        m.fcWeight.rows != m.layer2.hiddenSize || m.fcWeight.cols != m.numRes ||
        static_cast<int>(m.fcBias.size()) != m.numRes)
      throw ParameterError("checkpoint: inconsistent model shapes");
    seqnet::check_finite(m);
    const auto& cfg = j.at("cfg");
    c.cfg.seed = j.at("seed").get<std::uint64_t>();
    c.cfg.initialLearnRate = cfg.at("lr").get<double>();
    c.cfg.maxEpochs = cfg.at("epochs").get<int>();
    c.cfg.batchSize = cfg.at("batch").get<int>();
    c.cfg.beta1 = cfg.at("beta1").get<double>();
    c.cfg.beta2 = cfg.at("beta2").get<double>();
    c.cfg.epsilon = cfg.at("epsilon").get<double>();
    c.encoding = parse_encoding(j.at("encoding").get<std::string>());
    return c;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("checkpoint json: ") + e.what());
  }
}

// ---------------------------------------------------------------- CSV

inline std::string format_number(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

inline const std::string& metric_header() {
  static const std::string h =
      "scheme,seed,numEC,numRequests,capacity,avgDelayMs,rmse,relErrPct,rSquared,accuracyPct,solveMs,trainMs,inferMs,"
      "repairCloudCount";
  return h;
}

// Timing columns are wall clock and therefore vary run to run; with
// `withTimings = false` they are written as 0 so files compare byte for byte.
inline std::string metric_row(const MetricReport& r, bool withTimings) {
  auto t = [&](double ms) { return format_number(withTimings ? ms : 0.0, 3); };
  std::ostringstream ss;
  ss << r.scheme << ',' << r.seed << ',' << r.numEC << ',' << r.numRequests << ',' << r.capacity << ','
     << format_number(r.avgDelayMs) << ',' << format_number(r.rmse) << ',' << format_number(r.relErrPct) << ','
     << format_number(r.rSquared) << ',' << format_number(r.accuracyPct) << ',' << t(r.solveMs) << ','
     << t(r.trainMs) << ',' << t(r.inferMs) << ',' << r.repairCloudCount;
  return ss.str();
}

inline std::string trace_csv(const seqnet::TrainingTrace& trace) {
  std::string out = "epoch,loss,trainAccuracy,validationAccuracy\n";
  for (const auto& e : trace)
    out += std::to_string(e.epoch) + "," + format_number(e.loss, 9) + "," + format_number(e.trainAccuracy, 3) + "," +
           format_number(e.validationAccuracy, 3) + "\n";
  return out;
}

// Serialised appender: rows from parallel workers are buffered under a lock
// and flushed in a caller-chosen order.
class CsvAppender {
 public:
  explicit CsvAppender(std::string header) : header_(std::move(header)) {}

  void add(std::size_t key, std::string row) {
    std::lock_guard lock(mu_);
    rows_.emplace_back(key, std::move(row));
  }

  std::string str() const {
    std::lock_guard lock(mu_);
    auto rows = rows_;
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out = header_ + "\n";
    for (const auto& [k, row] : rows) out += row + "\n";
    return out;
  }

 private:
  std::string header_;
  mutable std::mutex mu_;
  std::vector<std::pair<std::size_t, std::string>> rows_;
};

}  // namespace edgemar::io
