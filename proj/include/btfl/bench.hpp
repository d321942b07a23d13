#pragma once

#include <array>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "btfl/baselines.hpp"
#include "btfl/error.hpp"
#include "btfl/fed_sim.hpp"
#include "btfl/linalg.hpp"
#include "btfl/parallel.hpp"
#include "btfl/random.hpp"

namespace btfl {

enum class StreamTag { OriginalIND, ShiftedIND, OriginalEXD, ShiftedEXD, Synthetical };

inline constexpr std::array<StreamTag, 5> kAllStreams = {
    StreamTag::OriginalIND, StreamTag::ShiftedIND, StreamTag::OriginalEXD, StreamTag::ShiftedEXD,
    StreamTag::Synthetical};

inline std::string_view to_string(StreamTag tag) {
  switch (tag) {
    case StreamTag::OriginalIND: return "orig_ind";
    case StreamTag::ShiftedIND: return "shift_ind";
    case StreamTag::OriginalEXD: return "orig_exd";
    case StreamTag::ShiftedEXD: return "shift_exd";
    case StreamTag::Synthetical: return "synthetical";
  }
  return "synthetical";
}

inline StreamTag parse_stream_tag(std::string_view s) {
  for (StreamTag t : kAllStreams) {
    if (to_string(t) == s) return t;
  }
  throw IncompleteInput("unknown stream tag '" + std::string(s) + "'");
}

inline std::size_t index_of(StreamTag tag) { return static_cast<std::size_t>(tag); }

struct ShiftParams {
  double corruption_sigma = 0.6;  // additive raw-space noise
  double domain_strength = 0.5;   // size of the fixed affine perturbation

  friend bool operator==(const ShiftParams&, const ShiftParams&) = default;
};

// Raw-space affine map x -> A x + b shared by all clients of an experiment.
// A is the Gram-Schmidt orthonormalisation of I + strength * G / sqrt(n).
struct DomainShift {
  Matrix a;
  std::vector<double> b;

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out = a.apply(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
  }
};

inline DomainShift make_domain_shift(std::size_t raw_dim, double strength, std::uint64_t seed) {
  Rng rng(seed);
  DomainShift shift{Matrix(raw_dim, raw_dim), std::vector<double>(raw_dim, 0.0)};
  const double scale = strength / std::sqrt(static_cast<double>(raw_dim));
  for (std::size_t r = 0; r < raw_dim; ++r) {
    for (std::size_t c = 0; c < raw_dim; ++c) {
      shift.a(r, c) = (r == c ? 1.0 : 0.0) + rng.normal(0.0, scale);
    }
  }
  for (std::size_t r = 0; r < raw_dim; ++r) {
    auto row = shift.a.row(r);
    for (std::size_t q = 0; q < r; ++q) {
      const auto prev = shift.a.row(q);
      double dot = 0.0;
      for (std::size_t c = 0; c < raw_dim; ++c) dot += row[c] * prev[c];
      for (std::size_t c = 0; c < raw_dim; ++c) row[c] -= dot * prev[c];
    }
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : row) v /= norm;
  }
  for (auto& v : shift.b) v = rng.normal(0.0, scale);
  return shift;
}

enum class ShiftKind { Corruption, Domain };

struct ShiftOperator {
  ShiftKind kind = ShiftKind::Corruption;
  double corruption_sigma = 0.0;
  const DomainShift* domain = nullptr;

  std::vector<double> apply(std::span<const double> raw, Rng& rng) const {
    if (kind == ShiftKind::Domain) return domain->apply(raw);
    std::vector<double> out(raw.begin(), raw.end());
    for (auto& v : out) v += rng.normal(0.0, corruption_sigma);
    return out;
  }
};

struct StreamSample {
  FeatureVector z;
  std::size_t label = 0;
  StreamTag source = StreamTag::OriginalIND;

  friend bool operator==(const StreamSample&, const StreamSample&) = default;
};

struct BenchmarkStream {
  StreamTag tag = StreamTag::OriginalIND;
  std::size_t client_id = 0;
  std::uint64_t seed = 0;
  std::vector<StreamSample> samples;

  friend bool operator==(const BenchmarkStream&, const BenchmarkStream&) = default;
};

using StreamSet = std::array<BenchmarkStream, 5>;

struct ComplementResult {
  ProbVector distribution;
  bool degenerate = false;  // local distribution was uniform; fell back to uniform
};

// EXD label distribution: mass proportional to max(0, 1/K - local mass).
inline ComplementResult complement_distribution(const ProbVector& local) {
  const double k = static_cast<double>(local.size());
  std::vector<double> w(local.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::max(0.0, 1.0 / k - local[i]);
    total += w[i];
  }
  if (!(total > 1e-12)) return {ProbVector::uniform(local.size()), true};
  for (auto& v : w) v /= total;
  return {ProbVector::from(std::move(w), 1e-9), false};
}

// Extracts features from raw draws. With `shift_rng` set, positions alternate
// corruption (even) and domain shift (odd) before extraction.
inline std::vector<StreamSample> draw_samples(const TaskSpec& task, const RawDataset& raw,
                                              StreamTag tag, const ShiftParams& shift,
                                              const DomainShift& domain, Rng* shift_rng) {
  std::vector<StreamSample> out;
  out.reserve(raw.labels.size());
  const ShiftOperator corruption{ShiftKind::Corruption, shift.corruption_sigma, nullptr};
  const ShiftOperator domain_op{ShiftKind::Domain, 0.0, &domain};
  for (std::size_t i = 0; i < raw.labels.size(); ++i) {
    std::vector<double> x = raw.raw[i];
    if (shift_rng) x = (i % 2 == 0 ? corruption : domain_op).apply(x, *shift_rng);
    out.push_back({task.extractor.extract(x), raw.labels[i], tag});
  }
  return out;
}

// The five test distributions of one client.
inline StreamSet build_btgfl_streams(const ClientState& client, const TaskSpec& task,
                                     const ShiftParams& shift, const DomainShift& domain,
                                     std::size_t n_per_stream, std::uint64_t seed) {
  if (n_per_stream == 0 || n_per_stream % 4 != 0) {
    throw DomainError("n_per_stream must be a positive multiple of 4");
  }
  const auto complement = complement_distribution(client.class_distribution);
  if (complement.degenerate) {
    std::clog << "warning: client " << client.client_id
              << " has a uniform label distribution; EXD streams fall back to uniform\n";
  }
  StreamSet set;
  auto stream_rng = [&](StreamTag t) { return Rng(derive_seed(seed, to_string(t))); };
  // Each shifted stream is its original counterpart's raw draws pushed through
  // the shift operators, so a null shift reproduces the original sample for sample.
  struct Plan {
    StreamTag original;
    StreamTag shifted;
    const ProbVector* dist;
  };
  const Plan plans[2] = {{StreamTag::OriginalIND, StreamTag::ShiftedIND, &client.class_distribution},
                         {StreamTag::OriginalEXD, StreamTag::ShiftedEXD, &complement.distribution}};
  for (const auto& plan : plans) {
    Rng raw_rng = stream_rng(plan.original);
    const RawDataset raw = sample_raw(task, *plan.dist, n_per_stream, raw_rng);
    Rng shift_rng = stream_rng(plan.shifted);
    for (StreamTag tag : {plan.original, plan.shifted}) {
      auto& s = set[index_of(tag)];
      s.tag = tag;
      s.client_id = client.client_id;
      s.seed = seed;
      s.samples = draw_samples(task, raw, tag, shift, domain, tag == plan.shifted ? &shift_rng : nullptr);
    }
  }
  auto& synth = set[index_of(StreamTag::Synthetical)];
  synth.tag = StreamTag::Synthetical;
  synth.client_id = client.client_id;
  synth.seed = seed;
  const std::size_t quarter = n_per_stream / 4;
  for (std::size_t src = 0; src < 4; ++src) {
    const auto& from = set[src].samples;
    synth.samples.insert(synth.samples.end(), from.begin(), from.begin() + quarter);
  }
  Rng rng = stream_rng(StreamTag::Synthetical);
  rng.shuffle(synth.samples);
  return set;
}

struct TraceRow {
  std::size_t client_id = 0;
  StreamTag stream = StreamTag::OriginalIND;
  std::size_t sample_idx = 0;
  std::size_t true_label = 0;
  std::size_t pred_label = 0;
  double e = 0.0;
  std::optional<double> tau_hat;
  std::optional<Event> event;
  std::optional<BetaParams> prior;
  bool correct = false;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct Evaluation {
  std::vector<TraceRow> trace;
  double accuracy = 0.0;
};

// Sequential pass over the stream with a fresh method instance.
inline Evaluation evaluate(AdaptationMethod& method, const BenchmarkStream& stream,
                           const ClientState& client) {
  Evaluation out;
  out.trace.reserve(stream.samples.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < stream.samples.size(); ++i) {
    const auto& s = stream.samples[i];
    const auto logits_l = client.personal_head.logits(s.z);
    const auto logits_g = client.global_head.logits(s.z);
    MethodOutput r = method.step(s.z, logits_l, logits_g, s.label);
    TraceRow row;
    row.client_id = stream.client_id;
    row.stream = stream.tag;
    row.sample_idx = i;
    row.true_label = s.label;
    row.pred_label = r.y.argmax();
    row.e = r.e;
    row.tau_hat = r.tau_hat;
    row.event = r.event;
    row.prior = r.prior;
    row.correct = row.pred_label == s.label;
    hits += row.correct;
    out.trace.push_back(std::move(row));
  }
  out.accuracy = stream.samples.empty()
                     ? 0.0
                     : static_cast<double>(hits) / static_cast<double>(stream.samples.size());
  return out;
}

struct SummaryRow {
  std::string method;
  std::array<double, 5> accuracy{};  // percent, indexed by StreamTag
  double avg = 0.0;

  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

// accuracy[method][client][stream] in [0, 1]; missing entries are NaN.
struct AccuracyGrid {
  std::vector<std::string> methods;
  std::size_t n_clients = 0;
  std::vector<double> values;

  AccuracyGrid() = default;
  AccuracyGrid(std::vector<std::string> m, std::size_t clients)
      : methods(std::move(m)), n_clients(clients), values(methods.size() * clients * 5, std::nan("")) {}

  double& at(std::size_t method, std::size_t client, StreamTag tag) {
    return values[(method * n_clients + client) * 5 + index_of(tag)];
  }
  double at(std::size_t method, std::size_t client, StreamTag tag) const {
    return values[(method * n_clients + client) * 5 + index_of(tag)];
  }
};

// Per-method means across clients for each stream, plus their average.
inline std::vector<SummaryRow> report(const AccuracyGrid& grid) {
  if (grid.methods.empty() || grid.n_clients == 0) throw IncompleteInput("empty accuracy grid");
  std::vector<SummaryRow> rows;
  for (std::size_t m = 0; m < grid.methods.size(); ++m) {
    SummaryRow row;
    row.method = grid.methods[m];
    double total = 0.0;
    for (StreamTag tag : kAllStreams) {
      double sum = 0.0;
      for (std::size_t c = 0; c < grid.n_clients; ++c) {
        const double v = grid.at(m, c, tag);
        if (std::isnan(v)) {
          throw IncompleteInput("accuracy grid is missing method '" + row.method + "', client " +
                                std::to_string(c) + ", stream " + std::string(to_string(tag)));
        }
        sum += v;
      }
      row.accuracy[index_of(tag)] = 100.0 * sum / static_cast<double>(grid.n_clients);
      total += row.accuracy[index_of(tag)];
    }
    row.avg = total / 5.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

struct BenchParams {
  std::size_t n_per_stream = 1000;
  ShiftParams shift{};
  std::vector<MethodSpec> methods;
  std::size_t workers = 0;  // 0 = hardware concurrency
};

struct BenchResult {
  std::vector<std::string> methods;
  // traces[m] holds every row of method m sorted by client, stream, sample.
  std::vector<std::vector<TraceRow>> traces;
  AccuracyGrid grid;
  std::vector<SummaryRow> summary;
};

inline std::uint64_t stream_seed(const Experiment& ex, std::size_t client) {
  return derive_seed(derive_seed(ex.seeds.master, "bench"), "client", client);
}

inline DomainShift experiment_domain_shift(const Experiment& ex, const ShiftParams& shift) {
  return make_domain_shift(ex.task.raw_dim(), shift.domain_strength,
                           derive_seed(ex.seeds.master, "domain_shift"));
}

inline std::vector<StreamSet> build_all_streams(const Experiment& ex, const BenchParams& params) {
  const DomainShift domain = experiment_domain_shift(ex, params.shift);
  std::vector<StreamSet> streams(ex.clients.size());
  parallel_for(
      ex.clients.size(),
      [&](std::size_t c) {
        streams[c] = build_btgfl_streams(ex.clients[c], ex.task, params.shift, domain,
                                         params.n_per_stream, stream_seed(ex, c));
      },
      params.workers);
  return streams;
}

// Evaluates every (client, method, stream) cell on a bounded worker pool.
// Output order is canonical regardless of completion order.
inline BenchResult run_benchmark(const Experiment& ex, const BenchParams& params,
                                 const MethodContext& ctx) {
  if (params.methods.empty()) throw ConfigError("methods", "no methods configured");
  const auto streams = build_all_streams(ex, params);
  const std::size_t n_clients = ex.clients.size();
  const std::size_t n_methods = params.methods.size();

  BenchResult out;
  for (const auto& m : params.methods) out.methods.push_back(m.name());
  out.grid = AccuracyGrid(out.methods, n_clients);

  std::vector<Evaluation> cells(n_methods * n_clients * 5);
  parallel_for(
      cells.size(),
      [&](std::size_t idx) {
        const std::size_t m = idx / (n_clients * 5);
        const std::size_t c = (idx / 5) % n_clients;
        const std::size_t s = idx % 5;
        auto method = make_method(params.methods[m], ex.clients[c], ctx);
        cells[idx] = evaluate(*method, streams[c][s], ex.clients[c]);
      },
      params.workers);

  out.traces.resize(n_methods);
  for (std::size_t m = 0; m < n_methods; ++m) {
    for (std::size_t c = 0; c < n_clients; ++c) {
      for (std::size_t s = 0; s < 5; ++s) {
        auto& cell = cells[(m * n_clients + c) * 5 + s];
        out.grid.at(m, c, kAllStreams[s]) = cell.accuracy;
        auto& dst = out.traces[m];
        dst.insert(dst.end(), std::make_move_iterator(cell.trace.begin()),
                   std::make_move_iterator(cell.trace.end()));
      }
    }
  }
  out.summary = report(out.grid);
  return out;
}

}  // namespace btfl
