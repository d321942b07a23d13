#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "btfl/error.hpp"
#include "btfl/math/quadrature.hpp"
#include "btfl/math/special.hpp"
#include "btfl/random.hpp"

namespace btfl {

using math::QuadratureConfig;

// Beta(alpha, beta) over the EXD probability m. alpha counts IND pseudo-events,
// beta counts EXD pseudo-events; both stay >= 1.
struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;

  double mean() const { return alpha / (alpha + beta); }
  // Number of events absorbed since the uniform prior.
  double implicit_count() const { return (alpha - 1.0) + (beta - 1.0); }

  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

inline void require_valid(const BetaParams& p) {
  if (!(p.alpha >= 1.0) || !(p.beta >= 1.0) || !std::isfinite(p.alpha) ||
      !std::isfinite(p.beta)) {
    throw DomainError("Beta parameters must be finite and >= 1, got (" +
                      std::to_string(p.alpha) + ", " + std::to_string(p.beta) + ")");
  }
}

inline double beta_log_pdf(double theta, const BetaParams& prior) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw DomainError("beta_pdf: theta must lie in [0, 1], got " + std::to_string(theta));
  }
  require_valid(prior);
  return math::xlogy(prior.alpha - 1.0, theta) + math::xlogy(prior.beta - 1.0, 1.0 - theta) -
         math::log_beta(prior.alpha, prior.beta);
}

inline double beta_pdf(double theta, const BetaParams& prior) {
  return std::exp(beta_log_pdf(theta, prior));
}

// Conjugate update with k successes out of n Bernoulli trials.
inline BetaParams beta_update(const BetaParams& prior, std::uint64_t successes,
                              std::uint64_t trials) {
  if (successes > trials) throw DomainError("beta_update: successes exceed trials");
  require_valid(prior);
  return {prior.alpha + static_cast<double>(successes),
          prior.beta + static_cast<double>(trials - successes)};
}

inline void require_valid_tau(double tau_hat) {
  if (!(tau_hat > 0.0) || !std::isfinite(tau_hat)) {
    throw DomainError("tau_hat must be finite and positive, got " + std::to_string(tau_hat));
  }
}

// Density of m_hat = m / (m + (1 - m) tau_hat) when m ~ Beta(alpha, beta).
inline double transformed_pdf(double m_hat, const BetaParams& prior, double tau_hat) {
  if (!(m_hat >= 0.0 && m_hat <= 1.0)) {
    throw DomainError("transformed_pdf: m_hat must lie in [0, 1], got " +
                      std::to_string(m_hat));
  }
  require_valid_tau(tau_hat);
  const double denom = 1.0 + m_hat * tau_hat - m_hat;
  const double m = std::clamp(m_hat * tau_hat / denom, 0.0, 1.0);
  return beta_pdf(m, prior) * tau_hat / (denom * denom);
}

// e = E[m_hat], integrated over the pre-transform variable m in logit
// coordinates: with m = sigmoid(x) the interpolation weight becomes
// sigmoid(x - log tau_hat) and the Beta density decays exponentially in |x|.
// The window is cut where the neglected tail mass is below abs_tol / 8.
inline double expected_interpolation_coefficient(const BetaParams& prior, double tau_hat,
                                                 const QuadratureConfig& cfg = {}) {
  require_valid(prior);
  require_valid_tau(tau_hat);
  cfg.validate();
  const double log_tau = std::log(tau_hat);
  const double log_b = math::log_beta(prior.alpha, prior.beta);
  const double slack = -std::log(cfg.abs_tol / 8.0) - log_b;
  const double lo = -std::max(1.0, (slack - std::log(prior.alpha)) / prior.alpha);
  const double hi = std::max(1.0, (slack - std::log(prior.beta)) / prior.beta);
  auto integrand = [&](double x) {
    const double log_density = prior.alpha * math::log_sigmoid(x) +
                               prior.beta * math::log_sigmoid(-x) - log_b;
    return math::sigmoid(x - log_tau) * std::exp(log_density);
  };
  const auto result = math::integrate_simpson(integrand, lo, hi, cfg);
  return std::clamp(result.value, 0.0, 1.0);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MonteCarloEstimate mc_oracle_estimate(const BetaParams& prior, double tau_hat,
                                             std::uint64_t n_samples, std::uint64_t seed) {
  require_valid(prior);
  require_valid_tau(tau_hat);
  if (n_samples < 10'000) throw DomainError("mc_oracle_e needs at least 1e4 samples");
  Rng rng(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    const double m = rng.beta(prior.alpha, prior.beta);
    const double v = m / (m + (1.0 - m) * tau_hat);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var / (n - 1.0))};
}

// Monte Carlo reference for expected_interpolation_coefficient.
inline double mc_oracle_e(const BetaParams& prior, double tau_hat, std::uint64_t n_samples,
                          std::uint64_t seed) {
  return mc_oracle_estimate(prior, tau_hat, n_samples, seed).mean;
}

}  // namespace btfl
