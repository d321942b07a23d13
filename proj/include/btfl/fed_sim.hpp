#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "btfl/adapter.hpp"
#include "btfl/error.hpp"
#include "btfl/feature_dle.hpp"
#include "btfl/information.hpp"
#include "btfl/linalg.hpp"
#include "btfl/parallel.hpp"
#include "btfl/random.hpp"

namespace btfl {

struct TaskParams {
  std::size_t n_classes = 10;
  std::size_t feature_dim = 32;
  std::size_t raw_dim = 20;
  double noise_sigma = 0.6;
  // Standard deviation of the class-mean coordinates.
  double class_separation = 0.5;
  // Multiplier on the extractor projection; sets the feature scale relative
  // to the quantization threshold.
  double extractor_gain = 0.75;

  friend bool operator==(const TaskParams&, const TaskParams&) = default;
};

// Frozen random projection followed by relu, shared by every client.
struct ExtractorSpec {
  Matrix projection;  // feature_dim x raw_dim

  FeatureVector extract(std::span<const double> raw) const {
    FeatureVector z = projection.apply(raw);
    for (auto& v : z) v = std::max(v, 0.0);
    return z;
  }
  friend bool operator==(const ExtractorSpec&, const ExtractorSpec&) = default;
};

struct TaskSpec {
  TaskParams params;
  Matrix class_means;  // n_classes x raw_dim
  ExtractorSpec extractor;
  std::uint64_t seed = 0;

  std::size_t n_classes() const { return params.n_classes; }
  std::size_t feature_dim() const { return params.feature_dim; }
  std::size_t raw_dim() const { return params.raw_dim; }
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

inline void validate(const TaskParams& p) {
  if (p.n_classes < 2) throw DomainError("task needs at least 2 classes");
  if (p.feature_dim < 4) throw DomainError("feature_dim must be >= 4");
  if (p.raw_dim < 1) throw DomainError("raw_dim must be >= 1");
  if (!(p.noise_sigma >= 0.0) || !std::isfinite(p.noise_sigma)) {
    throw DomainError("noise_sigma must be finite and >= 0");
  }
  if (!(p.class_separation > 0.0) || !std::isfinite(p.class_separation)) {
    throw DomainError("class_separation must be finite and > 0");
  }
  if (!(p.extractor_gain > 0.0) || !std::isfinite(p.extractor_gain)) {
    throw DomainError("extractor_gain must be finite and > 0");
  }
}

inline TaskSpec make_task(const TaskParams& params, std::uint64_t seed) {
  validate(params);
  TaskSpec task;
  task.params = params;
  task.seed = seed;
  Rng means_rng(derive_seed(seed, "class_means"));
  task.class_means = Matrix(params.n_classes, params.raw_dim);
  for (auto& v : task.class_means.data) v = means_rng.normal(0.0, params.class_separation);
  for (std::size_t a = 0; a < params.n_classes; ++a) {
    for (std::size_t b = a + 1; b < params.n_classes; ++b) {
      if (std::ranges::equal(task.class_means.row(a), task.class_means.row(b))) {
        throw DomainError("class means are not pairwise distinct");
      }
    }
  }
  Rng proj_rng(derive_seed(seed, "extractor"));
  const double scale = params.extractor_gain / std::sqrt(static_cast<double>(params.raw_dim));
  task.extractor.projection = Matrix(params.feature_dim, params.raw_dim);
  for (auto& v : task.extractor.projection.data) v = proj_rng.normal(0.0, scale);
  return task;
}

struct RawDataset {
  std::vector<std::vector<double>> raw;
  std::vector<std::size_t> labels;
};

struct Dataset {
  std::vector<FeatureVector> features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Labels ~ class_dist, raw points ~ N(class_mean, sigma^2 I).
inline RawDataset sample_raw(const TaskSpec& task, const ProbVector& class_dist, std::size_t n,
                             Rng& rng) {
  if (class_dist.size() != task.n_classes()) {
    throw DimensionMismatch("class distribution does not match the task's class count");
  }
  RawDataset out;
  out.raw.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = rng.categorical(class_dist.values());
    std::vector<double> x(task.raw_dim());
    const auto mean = task.class_means.row(label);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = rng.normal(mean[j], task.params.noise_sigma);
    out.raw.push_back(std::move(x));
    out.labels.push_back(label);
  }
  return out;
}

inline Dataset extract_all(const TaskSpec& task, const RawDataset& raw) {
  Dataset out;
  out.labels = raw.labels;
  out.features.reserve(raw.raw.size());
  for (const auto& x : raw.raw) out.features.push_back(task.extractor.extract(x));
  return out;
}

inline Dataset generate_client_data(const TaskSpec& task, const ProbVector& class_dist,
                                    std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < task.n_classes()) throw DomainError("n_samples must be >= n_classes");
  Rng rng(seed);
  return extract_all(task, sample_raw(task, class_dist, n_samples, rng));
}

// Per-client label distributions drawn from a symmetric Dirichlet.
inline std::vector<ProbVector> dirichlet_partition(std::size_t n_classes, std::size_t n_clients,
                                                   double concentration, std::uint64_t seed) {
  if (!(concentration > 0.0) || !std::isfinite(concentration)) {
    throw DomainError("Dirichlet concentration must be finite and > 0");
  }
  Rng rng(seed);
  std::vector<ProbVector> out;
  out.reserve(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) {
    out.push_back(ProbVector::from(rng.dirichlet(n_classes, concentration), 1e-9));
  }
  return out;
}

// Linear classification head: logits = W z + b.
struct HeadModel {
  Matrix weights;  // n_classes x feature_dim
  std::vector<double> bias;

  static HeadModel zeros(std::size_t n_classes, std::size_t feature_dim) {
    return {Matrix(n_classes, feature_dim), std::vector<double>(n_classes, 0.0)};
  }
  std::size_t n_classes() const { return weights.rows; }
  std::size_t feature_dim() const { return weights.cols; }

  std::vector<double> logits(std::span<const double> z) const {
    std::vector<double> out = weights.apply(z);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += bias[k];
    return out;
  }
  ProbVector predict(std::span<const double> z) const { return softmax(logits(z)); }

  friend bool operator==(const HeadModel&, const HeadModel&) = default;
};

struct HeadGradient {
  Matrix weights;
  std::vector<double> bias;
};

inline double sample_loss(const HeadModel& head, std::span<const double> z, std::size_t label) {
  const ProbVector p = head.predict(z);
  return -std::log(std::max(p[label], kProbFloor));
}

// Mean cross-entropy over the dataset.
inline double mean_loss(const HeadModel& head, const Dataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += sample_loss(head, data.features[i], data.labels[i]);
  }
  return total / static_cast<double>(data.size());
}

// Analytic gradient of mean_loss: (p - onehot) z^T and (p - onehot).
inline HeadGradient mean_loss_gradient(const HeadModel& head, const Dataset& data) {
  HeadGradient g{Matrix(head.n_classes(), head.feature_dim()),
                 std::vector<double>(head.n_classes(), 0.0)};
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ProbVector p = head.predict(data.features[i]);
    for (std::size_t k = 0; k < head.n_classes(); ++k) {
      const double residual = (p[k] - (k == data.labels[i] ? 1.0 : 0.0)) * inv_n;
      g.bias[k] += residual;
      auto row = g.weights.row(k);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += residual * data.features[i][j];
    }
  }
  return g;
}

inline double accuracy(const HeadModel& head, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    hits += head.predict(data.features[i]).argmax() == data.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// One pass of per-sample SGD in an order drawn from `rng`. Returns the mean
// pre-update loss.
inline double sgd_epoch(HeadModel& head, const Dataset& data, double lr, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  double total = 0.0;
  for (std::size_t idx : order) {
    const auto& z = data.features[idx];
    const std::size_t label = data.labels[idx];
    const auto logits = head.logits(z);
    if (!std::all_of(logits.begin(), logits.end(), [](double v) { return std::isfinite(v); })) {
      throw DivergenceError("SGD logits became non-finite (learning rate " + std::to_string(lr) + ")");
    }
    const ProbVector p = softmax(logits);
    total += -std::log(std::max(p[label], kProbFloor));
    for (std::size_t k = 0; k < head.n_classes(); ++k) {
      const double residual = p[k] - (k == label ? 1.0 : 0.0);
      head.bias[k] -= lr * residual;
      auto row = head.weights.row(k);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] -= lr * residual * z[j];
    }
  }
  const double mean = total / static_cast<double>(std::max<std::size_t>(1, data.size()));
  if (!std::isfinite(mean)) {
    throw DivergenceError("SGD loss became non-finite (learning rate " + std::to_string(lr) + ")");
  }
  for (double w : head.weights.data) {
    if (!std::isfinite(w)) {
      throw DivergenceError("SGD weights became non-finite (learning rate " + std::to_string(lr) +
                            ")");
    }
  }
  return mean;
}

struct TrainParams {
  std::size_t rounds = 30;
  std::size_t local_epochs = 2;
  double lr = 0.1;
  double lr_decay = 0.99;  // per round
  std::size_t personalize_epochs = 5;
  double personalize_lr = 0.05;

  friend bool operator==(const TrainParams&, const TrainParams&) = default;
};

// Learning rate used during FedAvg round `round`.
inline double round_lr(const TrainParams& p, std::size_t round) {
  return p.lr * std::pow(p.lr_decay, static_cast<double>(round));
}

// Shuffle stream for local epoch `epoch` of round `round`. Shared by all
// clients, so clients holding identical data take identical steps.
inline std::uint64_t local_epoch_seed(std::uint64_t seed, std::size_t round, std::size_t epoch) {
  return derive_seed(derive_seed(seed, "fedavg_round", round), "epoch", epoch);
}

// FedAvg: every round each client runs local SGD from the current global head,
// then the server takes the unweighted parameter mean.
inline HeadModel fedavg_train(std::span<const Dataset> clients, std::size_t n_classes,
                              std::size_t feature_dim, const TrainParams& params,
                              std::uint64_t seed) {
  if (clients.empty()) throw IncompleteInput("fedavg_train needs at least one client");
  HeadModel global = HeadModel::zeros(n_classes, feature_dim);
  std::vector<HeadModel> local(clients.size());
  for (std::size_t round = 0; round < params.rounds; ++round) {
    const double lr = round_lr(params, round);
    parallel_for(clients.size(), [&](std::size_t c) {
      local[c] = global;
      for (std::size_t epoch = 0; epoch < params.local_epochs; ++epoch) {
        Rng rng(local_epoch_seed(seed, round, epoch));
        sgd_epoch(local[c], clients[c], lr, rng);
      }
    });
    const double inv = 1.0 / static_cast<double>(clients.size());
    for (std::size_t i = 0; i < global.weights.data.size(); ++i) {
      double sum = 0.0;
      for (const auto& m : local) sum += m.weights.data[i];
      global.weights.data[i] = sum * inv;
    }
    for (std::size_t k = 0; k < n_classes; ++k) {
      double sum = 0.0;
      for (const auto& m : local) sum += m.bias[k];
      global.bias[k] = sum * inv;
    }
  }
  return global;
}

// Fine-tunes a copy of the global head on local data; the extractor is untouched.
inline HeadModel personalize_head(const HeadModel& global, const Dataset& data, std::size_t epochs,
                                  double lr, std::uint64_t seed) {
  HeadModel head = global;
  Rng rng(seed);
  for (std::size_t e = 0; e < epochs; ++e) sgd_epoch(head, data, lr, rng);
  return head;
}

inline EntropyBaselines compute_entropy_baselines(const HeadModel& head_l, const HeadModel& head_g,
                                                  std::span<const FeatureVector> features) {
  if (features.empty()) throw IncompleteInput("entropy baselines need a non-empty train set");
  double sum_l = 0.0;
  double sum_g = 0.0;
  for (const auto& z : features) {
    sum_l += entropy(head_l.predict(z));
    sum_g += entropy(head_g.predict(z));
  }
  const double n = static_cast<double>(features.size());
  return EntropyBaselines::clamped(sum_l / n, sum_g / n);
}

inline DleModel fit_local_dle(std::span<const FeatureVector> features) {
  std::vector<QuantizedFeature> bits;
  bits.reserve(features.size());
  for (const auto& z : features) bits.push_back(fsq(z));
  return fit_dle(bits);
}

struct ClientState {
  std::size_t client_id = 0;
  ProbVector class_distribution;
  Dataset train;
  HeadModel global_head;
  HeadModel personal_head;
  DleModel local_dle;
  DleModel global_dle;
  EntropyBaselines baselines;

  friend bool operator==(const ClientState&, const ClientState&) = default;
};

inline ClientState build_client_state(std::size_t client_id, ProbVector class_distribution,
                                      Dataset train, HeadModel global_head,
                                      HeadModel personal_head, DleModel global_dle) {
  ClientState s;
  s.client_id = client_id;
  s.class_distribution = std::move(class_distribution);
  s.local_dle = fit_local_dle(train.features);
  if (s.local_dle.dim() != global_dle.dim()) {
    throw DimensionMismatch("global DLE dimension differs from the client's features");
  }
  s.baselines = compute_entropy_baselines(personal_head, global_head, train.features);
  s.train = std::move(train);
  s.global_head = std::move(global_head);
  s.personal_head = std::move(personal_head);
  s.global_dle = std::move(global_dle);
  return s;
}

struct ExperimentParams {
  TaskParams task;
  std::size_t n_clients = 10;
  double concentration = 0.1;
  std::size_t train_samples = 500;
  TrainParams training;
  std::uint64_t seed = 0;

  friend bool operator==(const ExperimentParams&, const ExperimentParams&) = default;
};

// Named seeds every stage derives from the master seed.
struct ExperimentSeeds {
  std::uint64_t master = 0;
  std::uint64_t task = 0;
  std::uint64_t partition = 0;
  std::uint64_t train_data = 0;
  std::uint64_t fedavg = 0;
  std::uint64_t personalize = 0;

  static ExperimentSeeds from_master(std::uint64_t master) {
    return {master,
            derive_seed(master, "task"),
            derive_seed(master, "partition"),
            derive_seed(master, "train_data"),
            derive_seed(master, "fedavg"),
            derive_seed(master, "personalize")};
  }
  friend bool operator==(const ExperimentSeeds&, const ExperimentSeeds&) = default;
};

struct Experiment {
  ExperimentParams params;
  ExperimentSeeds seeds;
  TaskSpec task;
  std::vector<ClientState> clients;

  friend bool operator==(const Experiment&, const Experiment&) = default;
};

// End-to-end federated training: partition, data, FedAvg, personalization,
// DLEs and entropy baselines.
inline Experiment run_experiment(const ExperimentParams& params) {
  if (params.n_clients == 0) throw DomainError("n_clients must be positive");
  Experiment ex;
  ex.params = params;
  ex.seeds = ExperimentSeeds::from_master(params.seed);
  ex.task = make_task(params.task, ex.seeds.task);
  const std::size_t k = ex.task.n_classes();
  const std::size_t d = ex.task.feature_dim();

  const auto dists = dirichlet_partition(k, params.n_clients, params.concentration, ex.seeds.partition);
  std::vector<Dataset> data(params.n_clients);
  for (std::size_t c = 0; c < params.n_clients; ++c) {
    data[c] = generate_client_data(ex.task, dists[c], params.train_samples,
                                   derive_seed(ex.seeds.train_data, "client", c));
  }

  const HeadModel global = fedavg_train(data, k, d, params.training, ex.seeds.fedavg);

  std::vector<HeadModel> personal(params.n_clients);
  std::vector<DleModel> local_dles(params.n_clients);
  parallel_for(params.n_clients, [&](std::size_t c) {
    personal[c] = personalize_head(global, data[c], params.training.personalize_epochs,
                                   params.training.personalize_lr,
                                   derive_seed(ex.seeds.personalize, "client", c));
    local_dles[c] = fit_local_dle(data[c].features);
  });
  const DleModel global_dle = aggregate_dles(local_dles);

  ex.clients.reserve(params.n_clients);
  for (std::size_t c = 0; c < params.n_clients; ++c) {
    ex.clients.push_back(build_client_state(c, dists[c], std::move(data[c]), global,
                                            std::move(personal[c]), global_dle));
  }
  return ex;
}

// Mean of every client's training features (broadcast statistic).
inline FeatureVector global_feature_mean(const Experiment& ex) {
  FeatureVector mean(ex.task.feature_dim(), 0.0);
  std::size_t count = 0;
  for (const auto& c : ex.clients) {
    for (const auto& z : c.train.features) {
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += z[j];
    }
    count += c.train.size();
  }
  for (auto& v : mean) v /= static_cast<double>(std::max<std::size_t>(1, count));
  return mean;
}

inline FeatureVector feature_mean(std::span<const FeatureVector> features) {
  if (features.empty()) throw IncompleteInput("feature mean of an empty set");
  FeatureVector mean(features.front().size(), 0.0);
  for (const auto& z : features) {
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += z[j];
  }
  for (auto& v : mean) v /= static_cast<double>(features.size());
  return mean;
}

}  // namespace btfl
