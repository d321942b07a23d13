#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace btfl::math {

namespace detail {

// Lanczos approximation, g = 7, n = 9.
inline constexpr double kLanczosG = 7.0;
inline constexpr std::array<double, 9> kLanczosCoeffs = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

// zeta(k) for k = 2..kZetaTerms+1 by Euler-Maclaurin summation at N = 20.
inline constexpr std::size_t kZetaTerms = 40;

inline const std::array<double, kZetaTerms + 2>& zeta_table() {
  static const auto table = [] {
    std::array<double, kZetaTerms + 2> z{};
    constexpr double n = 20.0;
    for (std::size_t k = 2; k < z.size(); ++k) {
      const double s = static_cast<double>(k);
      double sum = 0.0;
      for (int i = 19; i >= 1; --i) sum += std::pow(static_cast<double>(i), -s);
      sum += std::pow(n, 1.0 - s) / (s - 1.0) + 0.5 * std::pow(n, -s);
      sum += s * std::pow(n, -s - 1.0) / 12.0;
      sum -= s * (s + 1.0) * (s + 2.0) * std::pow(n, -s - 3.0) / 720.0;
      sum += s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * std::pow(n, -s - 5.0) / 30240.0;
      z[k] = sum;
    }
    return z;
  }();
  return table;
}

// log Gamma(1 + z) for |z| <= 0.25 via its Taylor series.
inline double log_gamma_1p_series(double z) {
  const auto& zeta = zeta_table();
  double acc = 0.0;
  double power = -z;
  for (std::size_t k = 2; k <= kZetaTerms + 1; ++k) {
    power *= -z;
    acc += zeta[k] * power / static_cast<double>(k);
  }
  return -std::numbers::egamma * z + acc;
}

}  // namespace detail

// Natural log of |Gamma(x)| for x > 0. Relative error is below 1e-13 for
// x >= 1; smaller arguments go through the reflection formula.
inline double log_gamma(double x) {
  if (x < 0.5) {
    // Gamma(x) Gamma(1 - x) = pi / sin(pi x)
    return std::log(std::numbers::pi / std::abs(std::sin(std::numbers::pi * x))) -
           log_gamma(1.0 - x);
  }
  // Around the zeros at 1 and 2 the Lanczos sum only has absolute accuracy.
  if (std::abs(x - 1.0) <= 0.25) return detail::log_gamma_1p_series(x - 1.0);
  if (std::abs(x - 2.0) <= 0.25) return detail::log_gamma_1p_series(x - 2.0) + std::log1p(x - 2.0);
  const double z = x - 1.0;
  double series = detail::kLanczosCoeffs[0];
  for (std::size_t i = 1; i < detail::kLanczosCoeffs.size(); ++i) {
    series += detail::kLanczosCoeffs[i] / (z + static_cast<double>(i));
  }
  const double t = z + detail::kLanczosG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t +
         std::log(series);
}

// log B(a, b) = log Gamma(a) + log Gamma(b) - log Gamma(a + b)
inline double log_beta(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

// a * log(y) with the convention 0 * log(0) = 0.
inline double xlogy(double a, double y) {
  if (a == 0.0) return 0.0;
  return a * std::log(y);
}

}  // namespace btfl::math
