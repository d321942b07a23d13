#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "btfl/bayes.hpp"
#include "btfl/error.hpp"
#include "btfl/feature_dle.hpp"
#include "btfl/information.hpp"
#include "btfl/parallel.hpp"

namespace btfl {

inline constexpr double kEntropyFloor = 1e-6;
inline constexpr double kLogTauClamp = 50.0;
inline constexpr double kDefaultLambda = 16.0;

// Mean prediction entropy of the personal (l) and global (g) heads over the
// client's training set.
struct EntropyBaselines {
  double h_bar_l = 1.0;
  double h_bar_g = 1.0;

  static EntropyBaselines clamped(double h_l, double h_g) {
    return {std::max(h_l, kEntropyFloor), std::max(h_g, kEntropyFloor)};
  }
  friend bool operator==(const EntropyBaselines&, const EntropyBaselines&) = default;
};

// Per-sample log-likelihoods under the local/global DLEs and head entropies.
struct TestInformation {
  double log_q_l = 0.0;
  double log_q_g = 0.0;
  double h_l = 0.0;
  double h_g = 0.0;
};

enum class Event { IND, EXD, None };

inline std::string_view to_string(Event e) {
  switch (e) {
    case Event::IND: return "IND";
    case Event::EXD: return "EXD";
    case Event::None: return "None";
  }
  return "None";
}

struct HbuState {
  BetaParams prior{};
  double lambda = kDefaultLambda;

  void validate() const {
    require_valid(prior);
    if (!(lambda >= 3.0) || !std::isfinite(lambda)) {
      throw DomainError("HBU pruning threshold lambda must be >= 3");
    }
  }
  friend bool operator==(const HbuState&, const HbuState&) = default;
};

struct DpiResult {
  ProbVector y_int;
  double e = 0.0;
};

struct AdapterOutput {
  ProbVector y_int;
  double e = 0.0;
  Event event = Event::None;
  double tau_hat = 1.0;
  BetaParams prior{};  // HBU state after this sample

  friend bool operator==(const AdapterOutput&, const AdapterOutput&) = default;
};

inline TestInformation compute_test_info(const DleModel& local_dle, const DleModel& global_dle,
                                         std::span<const std::uint8_t> z_hat,
                                         const ProbVector& y_l, const ProbVector& y_g) {
  return {log_likelihood(local_dle, z_hat), log_likelihood(global_dle, z_hat), entropy(y_l),
          entropy(y_g)};
}

// Event detection: the likelihood ratio proposes IND (tau > 1) or EXD
// (tau < 1) and the entropy inspection accepts or rejects the proposal.
inline Event hbu_detect(const TestInformation& ti, const EntropyBaselines& baselines) {
  const double delta = ti.log_q_l - ti.log_q_g;
  if (delta > 0.0 && ti.h_l < baselines.h_bar_l && ti.h_g > baselines.h_bar_g) return Event::IND;
  if (delta < 0.0 && ti.h_l > baselines.h_bar_l && ti.h_g < baselines.h_bar_g) return Event::EXD;
  return Event::None;
}

// Beta-Bernoulli increment followed by prior-strength pruning.
inline HbuState hbu_update(HbuState state, Event event) {
  state.validate();
  if (event == Event::IND) state.prior.alpha += 1.0;
  if (event == Event::EXD) state.prior.beta += 1.0;
  const double total = state.prior.alpha + state.prior.beta;
  if (total > state.lambda) {
    // 1 + a / (a + b), written with a single rounding.
    const double a = state.prior.alpha;
    const double b = state.prior.beta;
    state.prior = {(2.0 * a + b) / total, (a + 2.0 * b) / total};
  }
  return state;
}

// Entropy-rectified ratio of geometric-mean likelihoods:
//   log tau_hat = u_l log_q_l / d - u_g log_q_g / d,  u = exp((H - H_bar) / H_bar)
inline double cbu_log_tau_hat(const TestInformation& ti, const EntropyBaselines& baselines,
                              std::size_t d) {
  if (d == 0) throw DimensionMismatch("cbu_tau_hat: feature dimension must be positive");
  const double h_bar_l = std::max(baselines.h_bar_l, kEntropyFloor);
  const double h_bar_g = std::max(baselines.h_bar_g, kEntropyFloor);
  const double u_l = std::exp((ti.h_l - h_bar_l) / h_bar_l);
  const double u_g = std::exp((ti.h_g - h_bar_g) / h_bar_g);
  const double dd = static_cast<double>(d);
  const double log_tau = u_l * (ti.log_q_l / dd) - u_g * (ti.log_q_g / dd);
  if (std::isnan(log_tau)) throw DomainError("cbu_tau_hat: NaN likelihood ratio");
  return std::clamp(log_tau, -kLogTauClamp, kLogTauClamp);
}

inline double cbu_tau_hat(const TestInformation& ti, const EntropyBaselines& baselines,
                          std::size_t d) {
  return std::exp(cbu_log_tau_hat(ti, baselines, d));
}

// Interpolated prediction e * y_g + (1 - e) * y_l with e = E[m_hat].
inline DpiResult dpi(const ProbVector& y_l, const ProbVector& y_g, const BetaParams& prior,
                     double tau_hat, const QuadratureConfig& cfg = {}) {
  require_same_size(y_l, y_g);
  const double e = expected_interpolation_coefficient(prior, tau_hat, cfg);
  return {mix(y_l, y_g, e), e};
}

struct AdapterOptions {
  double lambda = kDefaultLambda;
  QuadratureConfig quadrature{};
  // With HBU disabled the prior stays at Beta(1, 1).
  bool hbu_enabled = true;

  friend bool operator==(const AdapterOptions&, const AdapterOptions&) = default;
};

// Online adapter for one client stream. Calls must be serialized; the only
// mutable state is the HBU prior.
class BtflAdapter {
 public:
  BtflAdapter(DleModel local_dle, DleModel global_dle, EntropyBaselines baselines,
              AdapterOptions options = {})
      : local_dle_(std::move(local_dle)),
        global_dle_(std::move(global_dle)),
        baselines_(EntropyBaselines::clamped(baselines.h_bar_l, baselines.h_bar_g)),
        options_(options),
        state_{BetaParams{}, options.lambda} {
    if (local_dle_.dim() != global_dle_.dim()) {
      throw DimensionMismatch("local and global DLE dimensions differ");
    }
    state_.validate();
    options_.quadrature.validate();
  }

  AdapterOutput adapt(std::span<const double> z, std::span<const double> logits_l,
                      std::span<const double> logits_g) {
    return commit(prepare(z, logits_l, logits_g));
  }

  // Processes a chunk of samples. The per-sample statistics do not depend on
  // the prior, so they are computed first (on up to `workers` threads); the
  // prior updates then run in stream order. Results equal repeated adapt().
  std::vector<AdapterOutput> adapt_batch(std::span<const std::vector<double>> z,
                                         std::span<const std::vector<double>> logits_l,
                                         std::span<const std::vector<double>> logits_g,
                                         std::size_t workers = 1) {
    if (z.size() != logits_l.size() || z.size() != logits_g.size()) {
      throw DimensionMismatch("adapt_batch: inputs differ in length");
    }
    std::vector<Prepared> prepared(z.size());
    parallel_for(
        z.size(), [&](std::size_t i) { prepared[i] = prepare(z[i], logits_l[i], logits_g[i]); },
        workers);
    std::vector<AdapterOutput> out;
    out.reserve(z.size());
    for (auto& p : prepared) out.push_back(commit(std::move(p)));
    return out;
  }

  const HbuState& state() const { return state_; }
  const EntropyBaselines& baselines() const { return baselines_; }
  std::size_t dim() const { return local_dle_.dim(); }

 private:
  struct Prepared {
    ProbVector y_l;
    ProbVector y_g;
    TestInformation ti;
    double tau_hat = 1.0;
  };

  Prepared prepare(std::span<const double> z, std::span<const double> logits_l,
                   std::span<const double> logits_g) const {
    Prepared p{softmax(logits_l), softmax(logits_g), {}, 1.0};
    require_same_size(p.y_l, p.y_g);
    const QuantizedFeature z_hat = fsq(z);
    p.ti = compute_test_info(local_dle_, global_dle_, z_hat, p.y_l, p.y_g);
    p.tau_hat = cbu_tau_hat(p.ti, baselines_, local_dle_.dim());
    return p;
  }

  AdapterOutput commit(Prepared p) {
    Event event = Event::None;
    HbuState next = state_;
    if (options_.hbu_enabled) {
      event = hbu_detect(p.ti, baselines_);
      next = hbu_update(state_, event);
    }
    // m is the weight on the global head, so its prior mean tracks the EXD
    // share of the history: EXD counts enter as the first shape parameter.
    const BetaParams m_prior{next.prior.beta, next.prior.alpha};
    DpiResult mixed = dpi(p.y_l, p.y_g, m_prior, p.tau_hat, options_.quadrature);

    state_ = next;  // committed only after every step succeeded
    return {std::move(mixed.y_int), mixed.e, event, p.tau_hat, state_.prior};
  }

  DleModel local_dle_;
  DleModel global_dle_;
  EntropyBaselines baselines_;
  AdapterOptions options_;
  HbuState state_;
};

}  // namespace btfl
