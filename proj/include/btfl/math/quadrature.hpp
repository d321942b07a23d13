#pragma once

#include <cmath>
#include <concepts>
#include <string>

#include "btfl/error.hpp"

namespace btfl::math {

struct QuadratureConfig {
  int panels = 256;        // initial panel count, doubled until converged
  double abs_tol = 1e-8;   // stop when successive estimates differ by less
  int max_doublings = 16;

  void validate() const {
    if (panels < 16 || panels % 2 != 0) {
      throw DomainError("quadrature panels must be an even integer >= 16");
    }
    if (!(abs_tol > 0.0) || !std::isfinite(abs_tol)) {
      throw DomainError("quadrature abs_tol must be positive");
    }
  }

  friend bool operator==(const QuadratureConfig&, const QuadratureConfig&) = default;
};

struct QuadratureResult {
  double value = 0.0;
  double last_change = 0.0;
  int panels = 0;
};

// Composite Simpson on [a, b], doubling the panel count from cfg.panels until
// two successive estimates agree to cfg.abs_tol. Each doubling only evaluates
// the new midpoints.
template <std::invocable<double> F>
QuadratureResult integrate_simpson(F&& f, double a, double b, const QuadratureConfig& cfg) {
  cfg.validate();
  int n = cfg.panels;
  double h = (b - a) / n;
  double ends = f(a) + f(b);
  double evens = 0.0;  // interior nodes with even index
  double odds = 0.0;
  for (int i = 1; i < n; ++i) {
    const double v = f(a + i * h);
    (i % 2 == 0 ? evens : odds) += v;
  }
  double estimate = h / 3.0 * (ends + 2.0 * evens + 4.0 * odds);
  for (int round = 0; round < cfg.max_doublings; ++round) {
    n *= 2;
    h *= 0.5;
    evens += odds;
    odds = 0.0;
    for (int i = 1; i < n; i += 2) odds += f(a + i * h);
    const double refined = h / 3.0 * (ends + 2.0 * evens + 4.0 * odds);
    const double change = std::abs(refined - estimate);
    estimate = refined;
    if (change < cfg.abs_tol) return {estimate, change, n};
  }
  throw IntegrationError("Simpson refinement did not reach abs_tol " +
                         std::to_string(cfg.abs_tol) + " after " + std::to_string(n) +
                         " panels");
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow or cancellation.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// Integral of f over (0, 1) through the substitution m = sigmoid(x),
// dm = sigmoid(x) sigmoid(-x) dx, truncated to |x| <= window. Integrands with
// steep boundary layers at 0 or 1 become smooth bumps in x.
template <std::invocable<double> F>
QuadratureResult integrate_unit_interval(F&& f, const QuadratureConfig& cfg,
                                         double window = 60.0) {
  auto g = [&](double x) {
    const double weight = std::exp(log_sigmoid(x) + log_sigmoid(-x));
    if (weight == 0.0) return 0.0;
    return f(sigmoid(x)) * weight;
  };
  return integrate_simpson(g, -window, window, cfg);
}

}  // namespace btfl::math
