#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "btfl/adapter.hpp"
#include "btfl/bayes.hpp"
#include "btfl/feature_dle.hpp"
#include "btfl/information.hpp"
#include "btfl/math/quadrature.hpp"
#include "btfl/random.hpp"

namespace btfl {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestOptions {
  double lambda = kDefaultLambda;
  QuadratureConfig quadrature{};
  std::uint64_t seed = 0;
  std::size_t mc_cases = 20;
  std::uint64_t mc_draws = 1'000'000;
  std::size_t workers = 4;
};

namespace properties {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

// Beta(alpha, beta) with both shapes in [1, hi].
inline BetaParams random_prior(Rng& rng, double hi) {
  return {1.0 + (hi - 1.0) * rng.uniform(), 1.0 + (hi - 1.0) * rng.uniform()};
}

// Posterior on a grid, normalized by numerical integration of
// prior x likelihood, against the closed-form Beta update.
inline PropertyResult conjugacy(const SelftestOptions& opt) {
  Rng rng(derive_seed(opt.seed, "conjugacy"));
  const math::QuadratureConfig tight{256, 1e-13, 20};
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    const BetaParams prior = random_prior(rng, 20.0);
    const std::uint64_t n = rng.index(51);
    const std::uint64_t k = rng.index(n + 1);
    const double kk = static_cast<double>(k);
    const double nk = static_cast<double>(n - k);
    auto log_joint = [&](double t) {
      return beta_log_pdf(t, prior) + math::xlogy(kk, t) + math::xlogy(nk, 1.0 - t);
    };
    // Scaled by the largest value on a coarse logit grid so the integral is
    // O(1) and the absolute tolerance is meaningful.
    double peak = -std::numeric_limits<double>::infinity();
    for (int i = -400; i <= 400; ++i) peak = std::max(peak, log_joint(math::sigmoid(i / 20.0)));
    auto unnormalized = [&](double t) { return std::exp(log_joint(t) - peak); };
    const double z = math::integrate_unit_interval(unnormalized, tight).value;
    const BetaParams post = beta_update(prior, k, n);
    for (int i = 1; i < 200; ++i) {
      const double t = i / 200.0;
      worst = std::max(worst, std::abs(unnormalized(t) / z - beta_pdf(t, post)));
    }
  }
  return {"conjugacy", worst < 1e-6, "max pointwise error " + fmt(worst) + " (limit 1e-6)"};
}

inline PropertyResult normalization(const SelftestOptions& opt) {
  Rng rng(derive_seed(opt.seed, "normalization"));
  const math::QuadratureConfig tight{256, 1e-12, 20};
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const BetaParams prior = random_prior(rng, 20.0);
    const double tau = std::exp(-10.0 + 20.0 * rng.uniform());
    const double mass =
        math::integrate_unit_interval([&](double m) { return transformed_pdf(m, prior, tau); }, tight).value;
    worst = std::max(worst, std::abs(mass - 1.0));
  }
  return {"normalization", worst < 1e-6, "max |mass - 1| " + fmt(worst) + " (limit 1e-6)"};
}

inline PropertyResult quadrature_vs_mc(const SelftestOptions& opt) {
  Rng rng(derive_seed(opt.seed, "quadrature_vs_mc"));
  double worst = 0.0;
  for (std::size_t c = 0; c < opt.mc_cases; ++c) {
    const BetaParams prior = random_prior(rng, opt.lambda);
    const double tau = std::exp(-4.0 + 8.0 * rng.uniform());
    const double q = expected_interpolation_coefficient(prior, tau, opt.quadrature);
    const double mc = mc_oracle_e(prior, tau, opt.mc_draws, derive_seed(opt.seed, "mc_draws", c));
    worst = std::max(worst, std::abs(q - mc));
  }
  double worst_exact = 0.0;
  for (int c = 0; c < 20; ++c) {
    const BetaParams prior = random_prior(rng, opt.lambda);
    const double q = expected_interpolation_coefficient(prior, 1.0, opt.quadrature);
    worst_exact = std::max(worst_exact, std::abs(q - prior.mean()));
  }
  const bool ok = worst < 5e-3 && worst_exact < 1e-8;
  return {"quadrature_vs_mc", ok,
          "max |quad - mc| " + fmt(worst) + " (limit 5e-3), tau=1 error " + fmt(worst_exact) +
              " (limit 1e-8)"};
}

// Gibbs' inequality: H(p) <= CE(p, q) = -sum p log q.
inline PropertyResult entropy_bound(const SelftestOptions& opt) {
  Rng rng(derive_seed(opt.seed, "entropy_bound"));
  double worst = -1.0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t k = 2 + rng.index(15);
    const double conc = std::exp(-2.0 + 4.0 * rng.uniform());
    const ProbVector p = ProbVector::from(rng.dirichlet(k, conc));
    const ProbVector q = ProbVector::from(rng.dirichlet(k, conc));
    worst = std::max(worst, entropy(p) - cross_entropy(p, q));
    worst = std::max(worst, entropy(q) - cross_entropy(q, p));
  }
  return {"entropy_bound", worst <= 1e-9, "max H - CE " + fmt(worst) + " (limit 1e-9)"};
}

// e falls as tau_hat grows and rises with the first shape parameter.
inline PropertyResult monotonicity(const SelftestOptions& opt) {
  Rng rng(derive_seed(opt.seed, "monotonicity"));
  const double slack = 10.0 * opt.quadrature.abs_tol;
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const BetaParams prior = random_prior(rng, opt.lambda);
    double prev = 1.0;
    for (double lt = -8.0; lt <= 8.0; lt += 0.5) {
      const double e = expected_interpolation_coefficient(prior, std::exp(lt), opt.quadrature);
      worst = std::max(worst, e - prev);
      prev = e;
    }
    const double tau = std::exp(-3.0 + 6.0 * rng.uniform());
    const double lo = expected_interpolation_coefficient(prior, tau, opt.quadrature);
    const double hi =
        expected_interpolation_coefficient({prior.alpha + 1.0, prior.beta}, tau, opt.quadrature);
    worst = std::max(worst, lo - hi);
  }
  return {"monotonicity", worst <= slack, "largest wrong-way step " + fmt(worst) + " (limit " + fmt(slack) + ")"};
}

inline PropertyResult pruning_invariant(const SelftestOptions& opt) {
  Rng rng(derive_seed(opt.seed, "pruning_invariant"));
  HbuState state{{}, opt.lambda};
  state.validate();
  bool ok = true;
  std::string detail = "10000 random events kept alpha, beta >= 1 and alpha + beta <= lambda";
  for (int i = 0; i < 10'000 && ok; ++i) {
    const Event ev = static_cast<Event>(rng.index(3));
    state = hbu_update(state, ev);
    const auto& p = state.prior;
    if (!(p.alpha >= 1.0 && p.beta >= 1.0 && p.alpha + p.beta <= opt.lambda)) {
      ok = false;
      detail = "violated at step " + std::to_string(i) + ": (" + fmt(p.alpha) + ", " + fmt(p.beta) + ")";
    }
  }
  if (ok && opt.lambda == 16.0) {
    const HbuState pruned = hbu_update({{12.0, 5.0}, 16.0}, Event::EXD);
    if (pruned.prior.alpha != 5.0 / 3.0 || pruned.prior.beta != 4.0 / 3.0) {
      ok = false;
      detail = "(12, 5) + EXD gave (" + fmt(pruned.prior.alpha) + ", " + fmt(pruned.prior.beta) + ")";
    }
  }
  return {"pruning_invariant", ok, detail};
}

// A random adapter fixture: DLE parameters, features and logits chosen so
// that IND, EXD and undecided samples all occur.
struct AdapterFixture {
  DleModel local;
  DleModel global;
  EntropyBaselines baselines;
  std::vector<std::vector<double>> z;
  std::vector<std::vector<double>> logits_l;
  std::vector<std::vector<double>> logits_g;
};

inline AdapterFixture make_adapter_fixture(std::uint64_t seed, std::size_t n, std::size_t d = 16,
                                           std::size_t k = 5) {
  Rng rng(seed);
  AdapterFixture f;
  f.local.n_fit = f.global.n_fit = 100;
  for (std::size_t i = 0; i < d; ++i) {
    f.local.p.push_back(0.05 + 0.9 * rng.uniform());
    f.global.p.push_back(0.05 + 0.9 * rng.uniform());
  }
  f.baselines = {0.6, 0.9};
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> z(d), ll(k), lg(k);
    for (auto& v : z) v = std::max(0.0, rng.normal(0.3, 0.8));
    const double scale_l = 4.0 * rng.uniform();
    const double scale_g = 4.0 * rng.uniform();
    for (auto& v : ll) v = scale_l * rng.normal();
    for (auto& v : lg) v = scale_g * rng.normal();
    f.z.push_back(std::move(z));
    f.logits_l.push_back(std::move(ll));
    f.logits_g.push_back(std::move(lg));
  }
  return f;
}

inline PropertyResult batch_invariance(const SelftestOptions& opt) {
  const AdapterFixture f = make_adapter_fixture(derive_seed(opt.seed, "batch_invariance"), 500);
  const AdapterOptions options{opt.lambda, opt.quadrature, true};
  BtflAdapter single(f.local, f.global, f.baselines, options);
  std::vector<AdapterOutput> one;
  for (std::size_t i = 0; i < f.z.size(); ++i) one.push_back(single.adapt(f.z[i], f.logits_l[i], f.logits_g[i]));

  BtflAdapter chunked(f.local, f.global, f.baselines, options);
  std::vector<AdapterOutput> many;
  constexpr std::size_t chunk = 32;
  for (std::size_t start = 0; start < f.z.size(); start += chunk) {
    const std::size_t len = std::min(chunk, f.z.size() - start);
    auto part = chunked.adapt_batch(std::span(f.z).subspan(start, len),
                                    std::span(f.logits_l).subspan(start, len),
                                    std::span(f.logits_g).subspan(start, len), opt.workers);
    many.insert(many.end(), part.begin(), part.end());
  }
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < one.size(); ++i) mismatches += !(one[i] == many[i]);
  return {"batch_invariance", mismatches == 0 && one.size() == many.size(),
          std::to_string(mismatches) + " of " + std::to_string(one.size()) +
              " outputs differ between chunk sizes 1 and 32"};
}

}  // namespace properties

// Runs the full battery. A property that throws is reported as failed.
inline std::vector<PropertyResult> run_selftest(const SelftestOptions& opt = {}) {
  using Fn = PropertyResult (*)(const SelftestOptions&);
  const std::pair<const char*, Fn> battery[] = {
      {"conjugacy", properties::conjugacy},
      {"normalization", properties::normalization},
      {"quadrature_vs_mc", properties::quadrature_vs_mc},
      {"entropy_bound", properties::entropy_bound},
      {"monotonicity", properties::monotonicity},
      {"pruning_invariant", properties::pruning_invariant},
      {"batch_invariance", properties::batch_invariance},
  };
  std::vector<PropertyResult> out;
  for (const auto& [name, fn] : battery) {
    const auto start = std::chrono::steady_clock::now();
    PropertyResult r;
    try {
      r = fn(opt);
    } catch (const std::exception& e) {
      r = {name, false, std::string("threw: ") + e.what()};
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace btfl
