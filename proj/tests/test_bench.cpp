#include <algorithm>
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "btfl/bench.hpp"

using namespace btfl;

namespace {

ExperimentParams small_params() {
  ExperimentParams p;
  p.task.n_classes = 5;
  p.task.feature_dim = 12;
  p.task.raw_dim = 8;
  p.n_clients = 3;
  p.train_samples = 80;
  p.training.rounds = 5;
  p.training.personalize_epochs = 2;
  p.seed = 21;
  return p;
}

const Experiment& small_experiment() {
  static const Experiment ex = run_experiment(small_params());
  return ex;
}

StreamSet streams_for(const Experiment& ex, std::size_t client, const ShiftParams& shift, std::size_t n) {
  const DomainShift domain = experiment_domain_shift(ex, shift);
  return build_btgfl_streams(ex.clients[client], ex.task, shift, domain, n, stream_seed(ex, client));
}

}  // namespace

TEST(Complement, ExcludesClassesAtOrAboveUniformMass) {
  const auto r = complement_distribution(ProbVector::one_hot(5, 0));
  EXPECT_FALSE(r.degenerate);
  EXPECT_EQ(r.distribution[0], 0.0);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_NEAR(r.distribution[k], 0.25, 1e-15);

  const auto skew = complement_distribution(ProbVector::from({0.5, 0.3, 0.15, 0.05}));
  EXPECT_EQ(skew.distribution[0], 0.0);
  EXPECT_EQ(skew.distribution[1], 0.0);
  EXPECT_NEAR(skew.distribution[2], 0.1 / 0.3, 1e-12);
  EXPECT_NEAR(skew.distribution[3], 0.2 / 0.3, 1e-12);

  const auto flat = complement_distribution(ProbVector::uniform(4));
  EXPECT_TRUE(flat.degenerate);
  EXPECT_EQ(flat.distribution, ProbVector::uniform(4));
}

TEST(Streams, ShapesTagsAndSyntheticalComposition) {
  const auto& ex = small_experiment();
  const auto set = streams_for(ex, 1, ShiftParams{}, 40);
  for (StreamTag tag : kAllStreams) {
    const auto& s = set[index_of(tag)];
    EXPECT_EQ(s.tag, tag);
    EXPECT_EQ(s.client_id, 1u);
    EXPECT_EQ(s.samples.size(), 40u);
  }
  std::map<StreamTag, int> sources;
  for (const auto& s : set[index_of(StreamTag::Synthetical)].samples) {
    ++sources[s.source];
    // Every synthetical sample is one of the first quarter of its source stream.
    const auto& from = set[index_of(s.source)].samples;
    EXPECT_NE(std::find(from.begin(), from.begin() + 10, s), from.begin() + 10);
  }
  for (std::size_t src = 0; src < 4; ++src) EXPECT_EQ(sources[kAllStreams[src]], 10);
  EXPECT_THROW(streams_for(ex, 0, ShiftParams{}, 42), DomainError);
  EXPECT_THROW(streams_for(ex, 0, ShiftParams{}, 0), DomainError);
}

TEST(Streams, ExdLabelsAvoidDominantClasses) {
  const auto& ex = small_experiment();
  for (std::size_t c = 0; c < ex.clients.size(); ++c) {
    const auto& dist = ex.clients[c].class_distribution;
    const auto set = streams_for(ex, c, ShiftParams{}, 200);
    for (StreamTag tag : {StreamTag::OriginalEXD, StreamTag::ShiftedEXD}) {
      for (const auto& s : set[index_of(tag)].samples) {
        EXPECT_LT(dist[s.label], 1.0 / static_cast<double>(dist.size()));
      }
    }
  }
}

TEST(Streams, DeterministicPerSeed) {
  const auto& ex = small_experiment();
  EXPECT_EQ(streams_for(ex, 2, ShiftParams{}, 40), streams_for(ex, 2, ShiftParams{}, 40));
  const auto domain = experiment_domain_shift(ex, ShiftParams{});
  const auto other = build_btgfl_streams(ex.clients[2], ex.task, ShiftParams{}, domain, 40, 999);
  EXPECT_NE(other[0].samples, streams_for(ex, 2, ShiftParams{}, 40)[0].samples);
}

TEST(Streams, NullShiftReproducesOriginal) {
  const auto& ex = small_experiment();
  const auto set = streams_for(ex, 0, ShiftParams{0.0, 0.0}, 48);
  const std::pair<StreamTag, StreamTag> pairs[] = {{StreamTag::OriginalIND, StreamTag::ShiftedIND},
                                                   {StreamTag::OriginalEXD, StreamTag::ShiftedEXD}};
  for (const auto& [orig, shifted] : pairs) {
    const auto& a = set[index_of(orig)].samples;
    const auto& b = set[index_of(shifted)].samples;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].z, b[i].z);
      EXPECT_EQ(a[i].label, b[i].label);
    }
  }
}

TEST(Streams, ShiftsMoveFeaturesButKeepLabels) {
  const auto& ex = small_experiment();
  const auto set = streams_for(ex, 0, ShiftParams{}, 48);
  const auto& a = set[index_of(StreamTag::OriginalIND)].samples;
  const auto& b = set[index_of(StreamTag::ShiftedIND)].samples;
  std::size_t moved[2] = {0, 0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, b[i].label);
    moved[i % 2] += a[i].z != b[i].z;
  }
  EXPECT_GT(moved[0], 20u);  // corruption
  EXPECT_GT(moved[1], 20u);  // domain shift
}

TEST(DomainShiftMap, IsOrthonormal) {
  const auto d = make_domain_shift(6, 0.8, 3);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t q = 0; q < 6; ++q) {
      double dot = 0.0;
      for (std::size_t c = 0; c < 6; ++c) dot += d.a(r, c) * d.a(q, c);
      EXPECT_NEAR(dot, r == q ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Evaluate, OracleDominatesBothHeadsOnEveryStream) {
  const auto& ex = small_experiment();
  const auto set = streams_for(ex, 1, ShiftParams{}, 100);
  for (const auto& stream : set) {
    auto acc = [&](MethodSpec spec) {
      auto m = make_method(spec, ex.clients[1], MethodContext{});
      return evaluate(*m, stream, ex.clients[1]).accuracy;
    };
    const double oracle = acc({MethodKind::OracleMix});
    EXPECT_GE(oracle, acc({MethodKind::LocalOnly}));
    EXPECT_GE(oracle, acc({MethodKind::GlobalOnly}));
  }
}

TEST(Evaluate, TraceRowsDescribeTheStream) {
  const auto& ex = small_experiment();
  const auto set = streams_for(ex, 2, ShiftParams{}, 20);
  const auto& stream = set[index_of(StreamTag::ShiftedEXD)];
  auto m = make_method({MethodKind::Btfl}, ex.clients[2], MethodContext{});
  const auto ev = evaluate(*m, stream, ex.clients[2]);
  ASSERT_EQ(ev.trace.size(), 20u);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& row = ev.trace[i];
    EXPECT_EQ(row.sample_idx, i);
    EXPECT_EQ(row.stream, StreamTag::ShiftedEXD);
    EXPECT_EQ(row.true_label, stream.samples[i].label);
    EXPECT_EQ(row.correct, row.pred_label == row.true_label);
    EXPECT_TRUE(row.tau_hat && row.event && row.prior);
    hits += row.correct;
  }
  EXPECT_EQ(ev.accuracy, hits / 20.0);
}

TEST(Report, AveragesClientsThenStreams) {
  AccuracyGrid grid({"a"}, 2);
  const double vals[2][5] = {{0.1, 0.2, 0.3, 0.4, 0.5}, {0.3, 0.2, 0.1, 0.0, 0.9}};
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t s = 0; s < 5; ++s) grid.at(0, c, kAllStreams[s]) = vals[c][s];
  }
  const auto rows = report(grid);
  ASSERT_EQ(rows.size(), 1u);
  const double expected[5] = {20, 20, 20, 20, 70};
  for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(rows[0].accuracy[s], expected[s], 1e-12);
  EXPECT_NEAR(rows[0].avg, 30.0, 1e-12);
}

TEST(Report, SingleClientIsIdentityInPercent) {
  AccuracyGrid grid({"x", "y"}, 1);
  for (std::size_t m = 0; m < 2; ++m) {
    for (StreamTag t : kAllStreams) grid.at(m, 0, t) = 0.25 * static_cast<double>(m + 1);
  }
  const auto rows = report(grid);
  EXPECT_EQ(rows[1].method, "y");
  EXPECT_NEAR(rows[1].accuracy[4], 50.0, 1e-12);
  EXPECT_NEAR(rows[1].avg, 50.0, 1e-12);
}

TEST(Report, MissingCellsAreIncompleteInput) {
  AccuracyGrid grid({"a"}, 1);
  grid.at(0, 0, StreamTag::OriginalIND) = 0.5;
  EXPECT_THROW(report(grid), IncompleteInput);
  EXPECT_THROW(report(AccuracyGrid{}), IncompleteInput);
}

TEST(RunBenchmark, WorkerCountDoesNotChangeResults) {
  const auto& ex = small_experiment();
  BenchParams params;
  params.n_per_stream = 40;
  params.methods = {parse_method("local_only"), parse_method("fedthe_lite"), parse_method("btfl")};
  MethodContext ctx;
  ctx.global_feature_mean = global_feature_mean(ex);
  params.workers = 1;
  const auto a = run_benchmark(ex, params, ctx);
  params.workers = 4;
  const auto b = run_benchmark(ex, params, ctx);
  EXPECT_EQ(a.traces, b.traces);
  EXPECT_EQ(a.summary, b.summary);
  ASSERT_EQ(a.traces.size(), 3u);
  EXPECT_EQ(a.traces[2].size(), 3u * 5u * 40u);
  params.methods.clear();
  EXPECT_THROW(run_benchmark(ex, params, ctx), ConfigError);
}
