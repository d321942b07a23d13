// Trains a small federation, then adapts one client's shifted external stream
// sample by sample and prints how the mixing weight and prior evolve.

#include <cstdio>

#include "btfl.hpp"

int main() {
  using namespace btfl;

  ExperimentParams params;
  params.n_clients = 4;
  params.train_samples = 300;
  params.training.rounds = 15;
  const Experiment ex = run_experiment(params);
  const ClientState& client = ex.clients[0];

  BenchParams bench;
  bench.n_per_stream = 200;
  const auto domain = experiment_domain_shift(ex, bench.shift);
  const StreamSet streams = build_btgfl_streams(client, ex.task, bench.shift, domain, bench.n_per_stream,
                                                stream_seed(ex, 0));

  for (StreamTag tag : {StreamTag::OriginalIND, StreamTag::ShiftedEXD}) {
    BtflAdapter adapter(client.local_dle, client.global_dle, client.baselines);
    std::size_t hits = 0;
    std::printf("stream %s\n", std::string(to_string(tag)).c_str());
    const auto& samples = streams[index_of(tag)].samples;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const AdapterOutput out =
          adapter.adapt(s.z, client.personal_head.logits(s.z), client.global_head.logits(s.z));
      hits += out.y_int.argmax() == s.label;
      if (i % 40 == 0) {
        std::printf("  %3zu  e=%.3f  tau=%9.3g  event=%-4s  prior=(%.2f, %.2f)\n", i, out.e, out.tau_hat,
                    std::string(to_string(out.event)).c_str(), out.prior.alpha, out.prior.beta);
      }
    }
    std::printf("  accuracy %.1f%%\n", 100.0 * static_cast<double>(hits) / static_cast<double>(samples.size()));
  }
  return 0;
}
