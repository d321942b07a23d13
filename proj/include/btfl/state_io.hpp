#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "btfl/bench.hpp"
#include "btfl/error.hpp"
#include "btfl/fed_sim.hpp"

namespace btfl {

using nlohmann::json;

inline constexpr const char* kStateFormat = "btfl-state/1";

// JSON encoding of the experiment state. nlohmann writes the shortest decimal
// that parses back to the same double, so reals round-trip bit-identically.
namespace state_json {

inline json encode(const Matrix& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

template <class T>
T field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw IncompleteInput(std::string("state file is missing '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw IncompleteInput(std::string("state field '") + key + "' has the wrong type: " + e.what());
  }
}

inline const json& child(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw IncompleteInput(std::string("state file is missing '") + key + "'");
  return *it;
}

inline Matrix decode_matrix(const json& j) {
  Matrix m;
  m.rows = field<std::size_t>(j, "rows");
  m.cols = field<std::size_t>(j, "cols");
  m.data = field<std::vector<double>>(j, "data");
  if (m.data.size() != m.rows * m.cols) throw IncompleteInput("matrix data does not match its shape");
  return m;
}

inline json encode(const TaskParams& p) {
  return {{"n_classes", p.n_classes},       {"feature_dim", p.feature_dim},
          {"raw_dim", p.raw_dim},           {"noise_sigma", p.noise_sigma},
          {"class_separation", p.class_separation}, {"extractor_gain", p.extractor_gain}};
}

inline TaskParams decode_task_params(const json& j) {
  TaskParams p;
  p.n_classes = field<std::size_t>(j, "n_classes");
  p.feature_dim = field<std::size_t>(j, "feature_dim");
  p.raw_dim = field<std::size_t>(j, "raw_dim");
  p.noise_sigma = field<double>(j, "noise_sigma");
  p.class_separation = field<double>(j, "class_separation");
  p.extractor_gain = field<double>(j, "extractor_gain");
  return p;
}

inline json encode(const TrainParams& p) {
  return {{"rounds", p.rounds},
          {"local_epochs", p.local_epochs},
          {"lr", p.lr},
          {"lr_decay", p.lr_decay},
          {"personalize_epochs", p.personalize_epochs},
          {"personalize_lr", p.personalize_lr}};
}

inline TrainParams decode_train_params(const json& j) {
  TrainParams p;
  p.rounds = field<std::size_t>(j, "rounds");
  p.local_epochs = field<std::size_t>(j, "local_epochs");
  p.lr = field<double>(j, "lr");
  p.lr_decay = field<double>(j, "lr_decay");
  p.personalize_epochs = field<std::size_t>(j, "personalize_epochs");
  p.personalize_lr = field<double>(j, "personalize_lr");
  return p;
}

inline json encode(const ExperimentParams& p) {
  return {{"task", encode(p.task)},
          {"n_clients", p.n_clients},
          {"concentration", p.concentration},
          {"train_samples", p.train_samples},
          {"training", encode(p.training)},
          {"seed", p.seed}};
}

inline ExperimentParams decode_experiment_params(const json& j) {
  ExperimentParams p;
  p.task = decode_task_params(child(j, "task"));
  p.n_clients = field<std::size_t>(j, "n_clients");
  p.concentration = field<double>(j, "concentration");
  p.train_samples = field<std::size_t>(j, "train_samples");
  p.training = decode_train_params(child(j, "training"));
  p.seed = field<std::uint64_t>(j, "seed");
  return p;
}

inline json encode(const ExperimentSeeds& s) {
  return {{"master", s.master},         {"task", s.task},       {"partition", s.partition},
          {"train_data", s.train_data}, {"fedavg", s.fedavg}, {"personalize", s.personalize}};
}

inline ExperimentSeeds decode_seeds(const json& j) {
  ExperimentSeeds s;
  s.master = field<std::uint64_t>(j, "master");
  s.task = field<std::uint64_t>(j, "task");
  s.partition = field<std::uint64_t>(j, "partition");
  s.train_data = field<std::uint64_t>(j, "train_data");
  s.fedavg = field<std::uint64_t>(j, "fedavg");
  s.personalize = field<std::uint64_t>(j, "personalize");
  return s;
}

inline json encode(const TaskSpec& t) {
  return {{"params", encode(t.params)},
          {"class_means", encode(t.class_means)},
          {"projection", encode(t.extractor.projection)},
          {"seed", t.seed}};
}

inline TaskSpec decode_task(const json& j) {
  TaskSpec t;
  t.params = decode_task_params(child(j, "params"));
  t.class_means = decode_matrix(child(j, "class_means"));
  t.extractor.projection = decode_matrix(child(j, "projection"));
  t.seed = field<std::uint64_t>(j, "seed");
  if (t.class_means.rows != t.n_classes() || t.class_means.cols != t.raw_dim() ||
      t.extractor.projection.rows != t.feature_dim() || t.extractor.projection.cols != t.raw_dim()) {
    throw IncompleteInput("task matrices do not match the task parameters");
  }
  return t;
}

inline json encode(const HeadModel& h) { return {{"weights", encode(h.weights)}, {"bias", h.bias}}; }

inline HeadModel decode_head(const json& j) {
  HeadModel h;
  h.weights = decode_matrix(child(j, "weights"));
  h.bias = field<std::vector<double>>(j, "bias");
  if (h.bias.size() != h.weights.rows) throw IncompleteInput("head bias does not match its weights");
  return h;
}

inline json encode(const DleModel& d) { return {{"p", d.p}, {"n_fit", d.n_fit}}; }

inline DleModel decode_dle(const json& j) {
  DleModel d;
  d.p = field<std::vector<double>>(j, "p");
  d.n_fit = field<std::size_t>(j, "n_fit");
  return d;
}

inline json encode(const ClientState& c) {
  return {{"client_id", c.client_id},
          {"class_distribution", c.class_distribution.values()},
          {"train_features", c.train.features},
          {"train_labels", c.train.labels},
          {"global_head", encode(c.global_head)},
          {"personal_head", encode(c.personal_head)},
          {"local_dle", encode(c.local_dle)},
          {"global_dle", encode(c.global_dle)},
          {"h_bar_l", c.baselines.h_bar_l},
          {"h_bar_g", c.baselines.h_bar_g}};
}

inline ClientState decode_client(const json& j) {
  ClientState c;
  c.client_id = field<std::size_t>(j, "client_id");
  try {
    c.class_distribution = ProbVector::from(field<std::vector<double>>(j, "class_distribution"));
  } catch (const DomainError& e) {
    throw IncompleteInput(std::string("client class distribution is invalid: ") + e.what());
  }
  c.train.features = field<std::vector<FeatureVector>>(j, "train_features");
  c.train.labels = field<std::vector<std::size_t>>(j, "train_labels");
  if (c.train.features.size() != c.train.labels.size()) {
    throw IncompleteInput("client training features and labels differ in length");
  }
  c.global_head = decode_head(child(j, "global_head"));
  c.personal_head = decode_head(child(j, "personal_head"));
  c.local_dle = decode_dle(child(j, "local_dle"));
  c.global_dle = decode_dle(child(j, "global_dle"));
  c.baselines.h_bar_l = field<double>(j, "h_bar_l");
  c.baselines.h_bar_g = field<double>(j, "h_bar_g");
  return c;
}

inline json encode(const Experiment& ex) {
  json clients = json::array();
  for (const auto& c : ex.clients) clients.push_back(encode(c));
  return {{"format", kStateFormat},
          {"params", encode(ex.params)},
          {"seeds", encode(ex.seeds)},
          {"task", encode(ex.task)},
          {"clients", std::move(clients)}};
}

inline Experiment decode_experiment(const json& j) {
  if (!j.is_object() || field<std::string>(j, "format") != kStateFormat) {
    throw IncompleteInput("not a btfl state file");
  }
  Experiment ex;
  ex.params = decode_experiment_params(child(j, "params"));
  ex.seeds = decode_seeds(child(j, "seeds"));
  ex.task = decode_task(child(j, "task"));
  for (const auto& c : child(j, "clients")) ex.clients.push_back(decode_client(c));
  if (ex.clients.size() != ex.params.n_clients) {
    throw IncompleteInput("state file holds " + std::to_string(ex.clients.size()) + " clients, expected " +
                          std::to_string(ex.params.n_clients));
  }
  return ex;
}

inline json encode(const BenchmarkStream& s) {
  json samples = json::array();
  for (const auto& x : s.samples) {
    samples.push_back({{"z", x.z}, {"label", x.label}, {"source", to_string(x.source)}});
  }
  return {{"tag", to_string(s.tag)}, {"client_id", s.client_id}, {"seed", s.seed}, {"samples", samples}};
}

inline BenchmarkStream decode_stream(const json& j) {
  BenchmarkStream s;
  s.tag = parse_stream_tag(field<std::string>(j, "tag"));
  s.client_id = field<std::size_t>(j, "client_id");
  s.seed = field<std::uint64_t>(j, "seed");
  for (const auto& x : child(j, "samples")) {
    s.samples.push_back({field<FeatureVector>(x, "z"), field<std::size_t>(x, "label"),
                         parse_stream_tag(field<std::string>(x, "source"))});
  }
  return s;
}

}  // namespace state_json

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IncompleteInput("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  if (!out) throw Error("cannot write " + path.string());
}

inline std::string serialize_state(const Experiment& ex) { return state_json::encode(ex).dump() + "\n"; }

inline Experiment parse_state(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IncompleteInput(std::string("state file is not valid JSON: ") + e.what());
  }
  return state_json::decode_experiment(j);
}

inline void save_state(const std::filesystem::path& path, const Experiment& ex) {
  write_text_file(path, serialize_state(ex));
}

inline Experiment load_state(const std::filesystem::path& path) { return parse_state(read_text_file(path)); }

// %.9g, the precision used in every CSV.
inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline constexpr const char* kTraceHeader =
    "client_id,stream_tag,sample_idx,true_label,pred_label,e,tau_hat,event,alpha,beta,correct";

inline std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.client_id) + ',' + std::string(to_string(r.stream)) + ',' +
           std::to_string(r.sample_idx) + ',' + std::to_string(r.true_label) + ',' +
           std::to_string(r.pred_label) + ',' + format_g9(r.e) + ',';
    if (r.tau_hat) out += format_g9(*r.tau_hat);
    out += ',';
    if (r.event) out += std::string(to_string(*r.event));
    out += ',';
    if (r.prior) out += format_g9(r.prior->alpha) + ',' + format_g9(r.prior->beta);
    else out += ',';
    out += ',';
    out += r.correct ? "1\n" : "0\n";
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// The columns `report` needs; optional BTFL fields are not reconstructed.
struct TraceCell {
  std::size_t client_id = 0;
  StreamTag stream = StreamTag::OriginalIND;
  bool correct = false;
};

inline std::vector<TraceCell> parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw IncompleteInput("trace CSV has an unexpected header");
  std::vector<TraceCell> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 11) {
      throw IncompleteInput("trace CSV line " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " columns");
    }
    TraceCell cell;
    try {
      cell.client_id = std::stoul(cells[0]);
      cell.stream = parse_stream_tag(cells[1]);
    } catch (const std::exception&) {
      throw IncompleteInput("trace CSV line " + std::to_string(line_no) + " is malformed");
    }
    if (cells[10] != "0" && cells[10] != "1") {
      throw IncompleteInput("trace CSV line " + std::to_string(line_no) + " has a bad 'correct' value");
    }
    cell.correct = cells[10] == "1";
    out.push_back(cell);
  }
  return out;
}

inline constexpr const char* kSummaryHeader = "method,orig_ind,shift_ind,orig_exd,shift_exd,synthetical,avg";

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& r : rows) {
    out += r.method;
    for (double a : r.accuracy) out += ',' + format_g9(a);
    out += ',' + format_g9(r.avg) + '\n';
  }
  return out;
}

// Aligned two-decimal table for terminals and logs.
inline std::string summary_table(const std::vector<SummaryRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  const char* cols[] = {"orig_ind", "shift_ind", "orig_exd", "shift_exd", "synthetical", "avg"};
  char buf[64];
  std::string out = "method" + std::string(width - 6, ' ');
  for (const char* c : cols) {
    std::snprintf(buf, sizeof buf, "  %11s", c);
    out += buf;
  }
  out += '\n';
  for (const auto& r : rows) {
    out += r.method + std::string(width - r.method.size(), ' ');
    for (double a : r.accuracy) {
      std::snprintf(buf, sizeof buf, "  %11.2f", a);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "  %11.2f", r.avg);
    out += buf;
    out += '\n';
  }
  return out;
}

// File-system safe form of a method name: fixed_mix(0.5) -> fixed_mix_0.5.
inline std::string method_file_stem(const std::string& method) {
  std::string out;
  for (char ch : method) {
    const bool keep = std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' || ch == '_';
    out += keep ? ch : '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

inline std::string trace_file_name(const std::string& method) { return "trace_" + method_file_stem(method) + ".csv"; }

// Writes traces, summary.csv, summary.txt and a manifest listing the methods
// and client count so `report` can rebuild the table from the traces.
inline void write_bench_outputs(const std::filesystem::path& dir, const BenchResult& result) {
  std::filesystem::create_directories(dir);
  json manifest = {{"methods", result.methods}, {"n_clients", result.grid.n_clients}, {"traces", json::array()}};
  for (std::size_t m = 0; m < result.methods.size(); ++m) {
    const std::string name = trace_file_name(result.methods[m]);
    write_text_file(dir / name, trace_csv(result.traces[m]));
    manifest["traces"].push_back(name);
  }
  write_text_file(dir / "summary.csv", summary_csv(result.summary));
  write_text_file(dir / "summary.txt", summary_table(result.summary));
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Rebuilds the accuracy grid from the trace files listed in the manifest.
inline AccuracyGrid load_accuracy_grid(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IncompleteInput(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  const auto methods = state_json::field<std::vector<std::string>>(manifest, "methods");
  const auto files = state_json::field<std::vector<std::string>>(manifest, "traces");
  const auto n_clients = state_json::field<std::size_t>(manifest, "n_clients");
  if (files.size() != methods.size()) throw IncompleteInput("manifest lists a trace per method");

  AccuracyGrid grid(methods, n_clients);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<std::size_t> hits(n_clients * 5, 0), total(n_clients * 5, 0);
    for (const auto& cell : parse_trace_csv(read_text_file(dir / files[m]))) {
      if (cell.client_id >= n_clients) throw IncompleteInput("trace references an unknown client");
      const std::size_t k = cell.client_id * 5 + index_of(cell.stream);
      hits[k] += cell.correct;
      ++total[k];
    }
    for (std::size_t c = 0; c < n_clients; ++c) {
      for (StreamTag tag : kAllStreams) {
        const std::size_t k = c * 5 + index_of(tag);
        if (total[k] > 0) {
          grid.at(m, c, tag) = static_cast<double>(hits[k]) / static_cast<double>(total[k]);
        }
      }
    }
  }
  return grid;
}

}  // namespace btfl
