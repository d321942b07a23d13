#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "btfl/bench.hpp"
#include "btfl/fed_sim.hpp"

using namespace btfl;

namespace {

HeadModel random_head(Rng& rng, std::size_t k, std::size_t d) {
  HeadModel h = HeadModel::zeros(k, d);
  for (auto& w : h.weights.data) w = rng.normal(0.0, 0.5);
  for (auto& b : h.bias) b = rng.normal(0.0, 0.5);
  return h;
}

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t k, std::size_t d) {
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector z(d);
    for (auto& v : z) v = std::max(0.0, rng.normal(0.5, 1.0));
    data.features.push_back(std::move(z));
    data.labels.push_back(rng.index(k));
  }
  return data;
}

// Two well separated clusters in 4-d.
Dataset separable(Rng& rng, std::size_t n) {
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    FeatureVector z(4, 0.0);
    z[label] = 2.0 + rng.normal(0.0, 0.3);
    z[2] = std::abs(rng.normal(0.0, 0.3));
    z[3] = std::abs(rng.normal(0.0, 0.3));
    data.features.push_back(std::move(z));
    data.labels.push_back(label);
  }
  return data;
}

ExperimentParams small_params() {
  ExperimentParams p;
  p.task.n_classes = 5;
  p.task.feature_dim = 12;
  p.task.raw_dim = 8;
  p.n_clients = 3;
  p.train_samples = 60;
  p.training.rounds = 4;
  p.training.personalize_epochs = 2;
  p.seed = 9;
  return p;
}

}  // namespace

TEST(Head, GradientMatchesCentralDifferences) {
  Rng rng(41);
  HeadModel head = random_head(rng, 3, 5);
  const Dataset data = random_dataset(rng, 20, 3, 5);
  const HeadGradient g = mean_loss_gradient(head, data);
  const double h = 1e-5;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = mean_loss(head, data);
    param = saved - h;
    const double down = mean_loss(head, data);
    param = saved;
    const double numeric = (up - down) / (2 * h);
    EXPECT_NEAR(analytic, numeric, 1e-5 * std::max(1.0, std::abs(numeric)));
  };
  for (std::size_t i = 0; i < head.weights.data.size(); ++i) check(head.weights.data[i], g.weights.data[i]);
  for (std::size_t k = 0; k < head.bias.size(); ++k) check(head.bias[k], g.bias[k]);
}

TEST(FedAvg, LearnsSeparableTask) {
  Rng rng(42);
  const std::vector<Dataset> clients = {separable(rng, 100), separable(rng, 100)};
  TrainParams p;
  p.rounds = 50;
  const HeadModel head = fedavg_train(clients, 2, 4, p, 1);
  EXPECT_GT(accuracy(head, separable(rng, 1000)), 0.95);
}

TEST(FedAvg, SingleClientIsPlainSgd) {
  Rng rng(43);
  const std::vector<Dataset> clients = {random_dataset(rng, 40, 3, 5)};
  TrainParams p;
  p.rounds = 6;
  p.local_epochs = 3;
  const HeadModel fed = fedavg_train(clients, 3, 5, p, 77);

  HeadModel plain = HeadModel::zeros(3, 5);
  for (std::size_t r = 0; r < p.rounds; ++r) {
    for (std::size_t e = 0; e < p.local_epochs; ++e) {
      Rng epoch_rng(local_epoch_seed(77, r, e));
      sgd_epoch(plain, clients[0], round_lr(p, r), epoch_rng);
    }
  }
  EXPECT_EQ(fed, plain);
}

TEST(FedAvg, IdenticalClientsMatchOneClient) {
  Rng rng(44);
  const Dataset d = random_dataset(rng, 30, 3, 5);
  const std::vector<Dataset> one = {d};
  const std::vector<Dataset> three = {d, d, d};
  TrainParams p;
  p.rounds = 5;
  const HeadModel a = fedavg_train(one, 3, 5, p, 5);
  const HeadModel b = fedavg_train(three, 3, 5, p, 5);
  for (std::size_t i = 0; i < a.weights.data.size(); ++i) EXPECT_NEAR(a.weights.data[i], b.weights.data[i], 1e-12);
  EXPECT_THROW(fedavg_train(std::span<const Dataset>{}, 3, 5, p, 5), IncompleteInput);
}

TEST(FedAvg, DivergenceIsReported) {
  Rng rng(45);
  std::vector<Dataset> clients = {random_dataset(rng, 30, 3, 5)};
  for (auto& z : clients[0].features) {
    for (auto& v : z) v *= 1e10;
  }
  TrainParams p;
  p.rounds = 3;
  p.lr = 1e300;
  EXPECT_THROW(fedavg_train(clients, 3, 5, p, 5), DivergenceError);
}

TEST(Partition, LargeConcentrationIsNearUniform) {
  for (const auto& dist : dirichlet_partition(10, 10, 1e6, 3)) {
    for (double v : dist.values()) EXPECT_NEAR(v, 0.1, 0.01);
  }
}

TEST(Partition, SmallConcentrationIsSkewed) {
  const auto dists = dirichlet_partition(10, 10, 0.1, 3);
  int skewed = 0;
  for (const auto& d : dists) skewed += *std::max_element(d.values().begin(), d.values().end()) > 0.5;
  EXPECT_GE(skewed, 7);
  EXPECT_THROW(dirichlet_partition(10, 10, 0.0, 3), DomainError);
  EXPECT_EQ(dirichlet_partition(10, 4, 0.3, 8).size(), 4u);
}

TEST(ClientData, NoiselessPointsSitOnExtractedMeans) {
  TaskParams tp;
  tp.noise_sigma = 0.0;
  const TaskSpec task = make_task(tp, 11);
  const Dataset d = generate_client_data(task, ProbVector::uniform(tp.n_classes), 50, 12);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.features[i], task.extractor.extract(task.class_means.row(d.labels[i])));
  }
}

TEST(ClientData, LabelsFollowDistributionAndFeaturesAreRectified) {
  const TaskSpec task = make_task(TaskParams{}, 13);
  std::vector<double> w(10, 0.0);
  w[2] = 0.25;
  w[7] = 0.75;
  const Dataset d = generate_client_data(task, ProbVector::from(w), 4000, 14);
  const auto sevens = std::count(d.labels.begin(), d.labels.end(), 7u);
  const auto twos = std::count(d.labels.begin(), d.labels.end(), 2u);
  EXPECT_EQ(sevens + twos, 4000);
  // Binomial(4000, 0.75): sd ~ 27.
  EXPECT_NEAR(static_cast<double>(sevens), 3000.0, 110.0);
  for (const auto& z : d.features) {
    EXPECT_EQ(z.size(), task.feature_dim());
    for (double v : z) EXPECT_GE(v, 0.0);
  }
  EXPECT_THROW(generate_client_data(task, ProbVector::from(w), 5, 14), DomainError);
  EXPECT_THROW(generate_client_data(task, ProbVector::uniform(3), 50, 14), DimensionMismatch);
}

TEST(Task, ValidatesParameters) {
  TaskParams tp;
  tp.n_classes = 1;
  EXPECT_THROW(make_task(tp, 0), DomainError);
  tp = {};
  tp.class_separation = 0.0;
  EXPECT_THROW(make_task(tp, 0), DomainError);
  EXPECT_EQ(make_task(TaskParams{}, 5), make_task(TaskParams{}, 5));
}

TEST(Personalize, ZeroEpochsKeepsGlobal) {
  Rng rng(46);
  const HeadModel g = random_head(rng, 3, 5);
  EXPECT_EQ(personalize_head(g, random_dataset(rng, 10, 3, 5), 0, 0.1, 1), g);
}

TEST(Personalize, SingleClassClientPredictsThatClass) {
  Rng rng(47);
  Dataset d = random_dataset(rng, 50, 3, 5);
  std::fill(d.labels.begin(), d.labels.end(), 1u);
  const HeadModel head = personalize_head(HeadModel::zeros(3, 5), d, 5, 0.1, 2);
  EXPECT_EQ(accuracy(head, d), 1.0);
}

TEST(Personalize, ReducesLocalLoss) {
  Rng rng(48);
  const Dataset d = random_dataset(rng, 80, 3, 5);
  const HeadModel g = random_head(rng, 3, 5);
  double prev = mean_loss(g, d);
  for (std::size_t epochs = 2; epochs <= 8; epochs += 2) {
    const double loss = mean_loss(personalize_head(g, d, epochs, 0.01, 3), d);
    EXPECT_LT(loss, prev + 1e-9);
    prev = loss;
  }
}

TEST(Baselines, ZeroHeadsGiveLogK) {
  Rng rng(49);
  const Dataset d = random_dataset(rng, 10, 4, 5);
  const auto b = compute_entropy_baselines(HeadModel::zeros(4, 5), HeadModel::zeros(4, 5), d.features);
  EXPECT_NEAR(b.h_bar_l, std::log(4.0), 1e-14);
  EXPECT_NEAR(b.h_bar_g, std::log(4.0), 1e-14);
  EXPECT_THROW(compute_entropy_baselines(HeadModel::zeros(4, 5), HeadModel::zeros(4, 5), {}), IncompleteInput);
}

TEST(Baselines, SingleSampleIsItsEntropy) {
  Rng rng(50);
  const HeadModel l = random_head(rng, 3, 5), g = random_head(rng, 3, 5);
  const Dataset d = random_dataset(rng, 1, 3, 5);
  const auto b = compute_entropy_baselines(l, g, d.features);
  EXPECT_NEAR(b.h_bar_l, std::max(entropy(l.predict(d.features[0])), kEntropyFloor), 1e-15);
  EXPECT_NEAR(b.h_bar_g, std::max(entropy(g.predict(d.features[0])), kEntropyFloor), 1e-15);
}

TEST(Experiment, ClientsShareGlobalStateAndRefitLocalDle) {
  const Experiment ex = run_experiment(small_params());
  ASSERT_EQ(ex.clients.size(), 3u);
  std::vector<DleModel> locals;
  for (const auto& c : ex.clients) {
    EXPECT_EQ(c.global_head, ex.clients[0].global_head);
    EXPECT_EQ(c.global_dle, ex.clients[0].global_dle);
    EXPECT_EQ(c.local_dle, fit_local_dle(c.train.features));
    EXPECT_EQ(c.train.size(), 60u);
    locals.push_back(c.local_dle);
  }
  EXPECT_EQ(ex.clients[0].global_dle, aggregate_dles(locals));
}

TEST(Experiment, DeterministicAndSeedSensitive) {
  const auto p = small_params();
  EXPECT_EQ(run_experiment(p), run_experiment(p));
  auto q = p;
  q.seed = 10;
  EXPECT_NE(run_experiment(p).clients[0].global_head, run_experiment(q).clients[0].global_head);
  q = p;
  q.n_clients = 0;
  EXPECT_THROW(run_experiment(q), DomainError);
}

// Default experiment: the personal head wins on its own label distribution and
// the global head on the complement, averaged over clients.
TEST(Experiment, HeadsSpecializeAsExpected) {
  const Experiment ex = run_experiment(ExperimentParams{});
  double pers_ind = 0, glob_ind = 0, pers_exd = 0, glob_exd = 0;
  for (const auto& c : ex.clients) {
    const Dataset ind = generate_client_data(ex.task, c.class_distribution, 1000, derive_seed(1, "ind", c.client_id));
    const Dataset exd = generate_client_data(ex.task, complement_distribution(c.class_distribution).distribution,
                                             1000, derive_seed(1, "exd", c.client_id));
    pers_ind += accuracy(c.personal_head, ind);
    glob_ind += accuracy(c.global_head, ind);
    pers_exd += accuracy(c.personal_head, exd);
    glob_exd += accuracy(c.global_head, exd);
  }
  EXPECT_GT(pers_ind, glob_ind);
  EXPECT_GT(glob_exd, pers_exd);
}

TEST(Experiment, GlobalFeatureMeanPoolsAllClients) {
  const Experiment ex = run_experiment(small_params());
  std::vector<FeatureVector> all;
  for (const auto& c : ex.clients) all.insert(all.end(), c.train.features.begin(), c.train.features.end());
  const auto a = global_feature_mean(ex);
  const auto b = feature_mean(all);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
}
