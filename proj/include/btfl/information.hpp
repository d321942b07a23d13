#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "btfl/error.hpp"

namespace btfl {

// Floor applied to probabilities before any logarithm.
inline constexpr double kProbFloor = 1e-12;

// A categorical distribution over K classes: entries >= 0 summing to 1.
class ProbVector {
 public:
  ProbVector() = default;

  // Validates and takes ownership. Throws DomainError when `values` is not a
  // distribution within `tol`.
  static ProbVector from(std::vector<double> values, double tol = 1e-9) {
    if (values.empty()) throw DomainError("probability vector is empty");
    double total = 0.0;
    for (double v : values) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw DomainError("probability entries must be finite and non-negative");
      }
      total += v;
    }
    if (std::abs(total - 1.0) > tol) {
      throw DomainError("probability vector sums to " + std::to_string(total));
    }
    return ProbVector(std::move(values));
  }

  static ProbVector uniform(std::size_t k) {
    return ProbVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
  }

  static ProbVector one_hot(std::size_t k, std::size_t hot) {
    std::vector<double> v(k, 0.0);
    v.at(hot) = 1.0;
    return ProbVector(std::move(v));
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& vec() const { return values_; }

  std::size_t argmax() const {
    return static_cast<std::size_t>(
        std::distance(values_.begin(), std::max_element(values_.begin(), values_.end())));
  }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  explicit ProbVector(std::vector<double> v) : values_(std::move(v)) {}
  friend ProbVector softmax(std::span<const double>);
  friend ProbVector mix(const ProbVector&, const ProbVector&, double);

  std::vector<double> values_;
};

// Max-subtracted softmax.
inline ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("softmax of an empty vector");
  const double hi = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(hi)) throw DomainError("softmax input must be finite");
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw DomainError("softmax input must be finite");
    out[i] = std::exp(logits[i] - hi);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return ProbVector(std::move(out));
}

inline void require_same_size(const ProbVector& a, const ProbVector& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("probability vectors of size " + std::to_string(a.size()) +
                            " and " + std::to_string(b.size()));
  }
}

// weight * b + (1 - weight) * a, weight in [0, 1].
inline ProbVector mix(const ProbVector& a, const ProbVector& b, double weight) {
  require_same_size(a, b);
  if (!(weight >= 0.0 && weight <= 1.0)) throw DomainError("mixing weight outside [0, 1]");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = weight * b[i] + (1.0 - weight) * a[i];
  }
  return ProbVector(std::move(out));
}

// Shannon entropy in nats; 0 log 0 = 0.
inline double entropy(const ProbVector& p) {
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(std::max(v, kProbFloor));
  }
  return h;
}

// -sum p_true log p_pred
inline double cross_entropy(const ProbVector& p_true, const ProbVector& p_pred) {
  require_same_size(p_true, p_pred);
  double ce = 0.0;
  for (std::size_t i = 0; i < p_true.size(); ++i) {
    if (p_true[i] > 0.0) ce -= p_true[i] * std::log(std::max(p_pred[i], kProbFloor));
  }
  return ce;
}

// KL(p || q) = sum p log(p / q)
inline double kl_divergence(const ProbVector& p, const ProbVector& q) {
  require_same_size(p, q);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      kl += p[i] * (std::log(std::max(p[i], kProbFloor)) - std::log(std::max(q[i], kProbFloor)));
    }
  }
  return kl;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("cosine of vectors of different size");
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (na * nb);
}

}  // namespace btfl
