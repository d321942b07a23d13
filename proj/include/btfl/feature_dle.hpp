#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "btfl/error.hpp"

namespace btfl {

// Post-relu extractor output z.
using FeatureVector = std::vector<double>;
// fsq(z), one bit per dimension stored as 0/1.
using QuantizedFeature = std::vector<std::uint8_t>;

// Per-dimension Bernoulli model of quantized features. p[i] is the smoothed
// frequency of bit value 0 in dimension i and always lies strictly in (0, 1).
struct DleModel {
  std::vector<double> p;
  std::uint64_t n_fit = 0;

  std::size_t dim() const { return p.size(); }
  friend bool operator==(const DleModel&, const DleModel&) = default;
};

// Round(tanh(z)) with ties away from zero. Features are post-relu, so each
// bit is 1 exactly when tanh(z_i) >= 0.5.
inline QuantizedFeature fsq(std::span<const double> z) {
  QuantizedFeature bits(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i]) || z[i] < 0.0) {
      throw DomainError("fsq expects finite non-negative features, got " + std::to_string(z[i]) +
                        " at index " + std::to_string(i));
    }
    bits[i] = std::round(std::tanh(z[i])) >= 1.0 ? 1 : 0;
  }
  return bits;
}

// Laplace-smoothed zero frequencies: p_i = (zeros_i + 1) / (N + 2).
inline DleModel fit_dle(std::span<const QuantizedFeature> samples) {
  if (samples.empty()) throw IncompleteInput("fit_dle: empty sample collection");
  const std::size_t d = samples.front().size();
  if (d == 0) throw DimensionMismatch("fit_dle: zero-dimensional features");
  std::vector<std::uint64_t> zeros(d, 0);
  for (const auto& s : samples) {
    if (s.size() != d) throw DimensionMismatch("fit_dle: samples of mixed dimension");
    for (std::size_t i = 0; i < d; ++i) zeros[i] += (s[i] == 0);
  }
  const double denom = static_cast<double>(samples.size()) + 2.0;
  DleModel model;
  model.n_fit = samples.size();
  model.p.resize(d);
  for (std::size_t i = 0; i < d; ++i) model.p[i] = (static_cast<double>(zeros[i]) + 1.0) / denom;
  return model;
}

// log q_dis(z_hat) = sum_i [z_i == 0] log p_i + [z_i == 1] log(1 - p_i)
inline double log_likelihood(const DleModel& model, std::span<const std::uint8_t> z_hat) {
  if (z_hat.size() != model.dim()) {
    throw DimensionMismatch("log_likelihood: feature dimension " + std::to_string(z_hat.size()) +
                            " vs model dimension " + std::to_string(model.dim()));
  }
  double ll = 0.0;
  for (std::size_t i = 0; i < z_hat.size(); ++i) {
    ll += z_hat[i] == 0 ? std::log(model.p[i]) : std::log1p(-model.p[i]);
  }
  return ll;
}

// Server-side unweighted average of client DLEs. Each dimension is summed in
// sorted order so the result is bit-identical under any client ordering.
inline DleModel aggregate_dles(std::span<const DleModel> models) {
  if (models.empty()) throw IncompleteInput("aggregate_dles: no models");
  const std::size_t d = models.front().dim();
  DleModel out;
  out.p.assign(d, 0.0);
  for (const auto& m : models) {
    if (m.dim() != d) throw DimensionMismatch("aggregate_dles: models of mixed dimension");
    out.n_fit += m.n_fit;
  }
  std::vector<double> column(models.size());
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t c = 0; c < models.size(); ++c) column[c] = models[c].p[i];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    out.p[i] = sum / static_cast<double>(models.size());
  }
  return out;
}

}  // namespace btfl
