#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "btfl/adapter.hpp"
#include "btfl/error.hpp"
#include "btfl/fed_sim.hpp"
#include "btfl/information.hpp"

namespace btfl {

// One step of an adaptation strategy. The optional fields are only filled by
// BTFL and are left empty in trace files for the baselines.
struct MethodOutput {
  ProbVector y;
  double e = 0.0;  // weight on the global head
  std::optional<double> tau_hat;
  std::optional<Event> event;
  std::optional<BetaParams> prior;
};

// A test-time strategy bound to one client stream. `true_label` is only
// consumed by evaluation-only strategies (oracle_mix).
class AdaptationMethod {
 public:
  virtual ~AdaptationMethod() = default;
  virtual MethodOutput step(std::span<const double> z, std::span<const double> logits_l,
                            std::span<const double> logits_g, std::size_t true_label) = 0;
};

inline ProbVector local_only(std::span<const double> logits_l) { return softmax(logits_l); }
inline ProbVector global_only(std::span<const double> logits_g) { return softmax(logits_g); }
inline ProbVector fixed_mix(std::span<const double> logits_l, std::span<const double> logits_g,
                            double e0) {
  return mix(softmax(logits_l), softmax(logits_g), e0);
}

struct OracleChoice {
  ProbVector y;
  bool used_global = false;
};

// The head assigning more probability to the true label; ties go local.
inline OracleChoice oracle_mix(std::span<const double> logits_l, std::span<const double> logits_g,
                               std::size_t true_label) {
  ProbVector y_l = softmax(logits_l);
  ProbVector y_g = softmax(logits_g);
  if (true_label >= y_l.size()) throw DomainError("oracle_mix: label out of range");
  if (y_g[true_label] > y_l[true_label]) return {std::move(y_g), true};
  return {std::move(y_l), false};
}

class FixedMixMethod final : public AdaptationMethod {
 public:
  explicit FixedMixMethod(double e0) : e0_(e0) {
    if (!(e0 >= 0.0 && e0 <= 1.0)) throw DomainError("fixed_mix weight must lie in [0, 1]");
  }
  MethodOutput step(std::span<const double>, std::span<const double> logits_l,
                    std::span<const double> logits_g, std::size_t) override {
    return {fixed_mix(logits_l, logits_g, e0_), e0_, {}, {}, {}};
  }

 private:
  double e0_;
};

class OracleMixMethod final : public AdaptationMethod {
 public:
  MethodOutput step(std::span<const double>, std::span<const double> logits_l,
                    std::span<const double> logits_g, std::size_t true_label) override {
    auto choice = oracle_mix(logits_l, logits_g, true_label);
    return {std::move(choice.y), choice.used_global ? 1.0 : 0.0, {}, {}, {}};
  }
};

struct FedTheLiteOptions {
  double initial_e = 0.5;
  double ema_ratio = 0.9;
  std::size_t steps = 20;
  double step_size = 0.1;
  double fd_step = 1e-4;

  friend bool operator==(const FedTheLiteOptions&, const FedTheLiteOptions&) = default;
};

// Simplified FedTHE: per sample, minimise
//   lambda_s * H(y(e)) + (1 - lambda_s) * |ema - ((1 - e) mu_l + e mu_g)|^2
// over e in [0, 1] with lambda_s = cos(y_g, y_l). e is warm-started across
// samples; the step size is halved whenever a step would raise the objective.
class FedTheLite final : public AdaptationMethod {
 public:
  FedTheLite(FeatureVector local_mean, FeatureVector global_mean, FedTheLiteOptions options = {})
      : local_mean_(std::move(local_mean)),
        global_mean_(std::move(global_mean)),
        options_(options),
        e_(options.initial_e) {
    if (local_mean_.size() != global_mean_.size()) {
      throw DimensionMismatch("fedthe_lite: feature means of different size");
    }
    if (!(options_.ema_ratio > 0.0 && options_.ema_ratio < 1.0)) {
      throw DomainError("fedthe_lite: ema_ratio must lie in (0, 1)");
    }
  }

  MethodOutput step(std::span<const double> z, std::span<const double> logits_l,
                    std::span<const double> logits_g, std::size_t) override {
    if (z.size() != local_mean_.size()) throw DimensionMismatch("fedthe_lite: feature size");
    const ProbVector y_l = softmax(logits_l);
    const ProbVector y_g = softmax(logits_g);
    const double lambda_s = std::clamp(cosine_similarity(y_g.values(), y_l.values()), 0.0, 1.0);
    if (ema_.empty()) ema_.assign(z.begin(), z.end());

    auto objective = [&](double e) {
      double fa = 0.0;
      for (std::size_t j = 0; j < ema_.size(); ++j) {
        const double target = (1.0 - e) * local_mean_[j] + e * global_mean_[j];
        fa += (ema_[j] - target) * (ema_[j] - target);
      }
      return lambda_s * entropy(mix(y_l, y_g, e)) + (1.0 - lambda_s) * fa;
    };

    objective_trace_.clear();
    double current = objective(e_);
    objective_trace_.push_back(current);
    double step = options_.step_size;
    for (std::size_t s = 0; s < options_.steps; ++s) {
      const double hi = std::min(e_ + options_.fd_step, 1.0);
      const double lo = std::max(e_ - options_.fd_step, 0.0);
      const double grad = (objective(hi) - objective(lo)) / (hi - lo);
      const double candidate = std::clamp(e_ - step * grad, 0.0, 1.0);
      const double value = objective(candidate);
      if (value <= current) {
        e_ = candidate;
        current = value;
      } else {
        step *= 0.5;
      }
      objective_trace_.push_back(current);
    }

    for (std::size_t j = 0; j < ema_.size(); ++j) {
      ema_[j] = options_.ema_ratio * ema_[j] + (1.0 - options_.ema_ratio) * z[j];
    }
    last_lambda_s_ = lambda_s;
    return {mix(y_l, y_g, e_), e_, {}, {}, {}};
  }

  double e() const { return e_; }
  double last_lambda_s() const { return last_lambda_s_; }
  const std::vector<double>& last_objective_trace() const { return objective_trace_; }

 private:
  FeatureVector local_mean_;
  FeatureVector global_mean_;
  FedTheLiteOptions options_;
  double e_;
  FeatureVector ema_;
  double last_lambda_s_ = 1.0;
  std::vector<double> objective_trace_;
};

class BtflMethod final : public AdaptationMethod {
 public:
  explicit BtflMethod(BtflAdapter adapter) : adapter_(std::move(adapter)) {}
  MethodOutput step(std::span<const double> z, std::span<const double> logits_l,
                    std::span<const double> logits_g, std::size_t) override {
    AdapterOutput out = adapter_.adapt(z, logits_l, logits_g);
    return {std::move(out.y_int), out.e, out.tau_hat, out.event, out.prior};
  }
  const BtflAdapter& adapter() const { return adapter_; }

 private:
  BtflAdapter adapter_;
};

enum class MethodKind { LocalOnly, GlobalOnly, FixedMix, OracleMix, FedTheLite, Btfl };

struct MethodSpec {
  MethodKind kind = MethodKind::Btfl;
  double mix_weight = 0.5;  // fixed_mix only

  std::string name() const {
    switch (kind) {
      case MethodKind::LocalOnly: return "local_only";
      case MethodKind::GlobalOnly: return "global_only";
      case MethodKind::FixedMix: {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof buf, mix_weight);
        return "fixed_mix(" + std::string(buf, res.ptr) + ")";
      }
      case MethodKind::OracleMix: return "oracle_mix";
      case MethodKind::FedTheLite: return "fedthe_lite";
      case MethodKind::Btfl: return "btfl";
    }
    return "btfl";
  }
  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

// Parses "local_only", "global_only", "fixed_mix(0.5)", "oracle_mix",
// "fedthe_lite" or "btfl".
inline MethodSpec parse_method(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  if (text == "local_only") return {MethodKind::LocalOnly};
  if (text == "global_only") return {MethodKind::GlobalOnly};
  if (text == "oracle_mix") return {MethodKind::OracleMix};
  if (text == "fedthe_lite") return {MethodKind::FedTheLite};
  if (text == "btfl") return {MethodKind::Btfl};
  constexpr std::string_view prefix = "fixed_mix(";
  if (text.starts_with(prefix) && text.ends_with(")")) {
    auto inner = trim(text.substr(prefix.size(), text.size() - prefix.size() - 1));
    double w = 0.0;
    auto res = std::from_chars(inner.data(), inner.data() + inner.size(), w);
    if (res.ec == std::errc() && res.ptr == inner.data() + inner.size() && w >= 0.0 && w <= 1.0) {
      return {MethodKind::FixedMix, w};
    }
  }
  throw ConfigError("methods", "unknown method '" + std::string(text) + "'");
}

// Everything a method factory needs beyond the client itself.
struct MethodContext {
  AdapterOptions adapter;
  FedTheLiteOptions fedthe;
  FeatureVector global_feature_mean;
};

inline std::unique_ptr<AdaptationMethod> make_method(const MethodSpec& spec,
                                                     const ClientState& client,
                                                     const MethodContext& ctx) {
  switch (spec.kind) {
    case MethodKind::LocalOnly: return std::make_unique<FixedMixMethod>(0.0);
    case MethodKind::GlobalOnly: return std::make_unique<FixedMixMethod>(1.0);
    case MethodKind::FixedMix: return std::make_unique<FixedMixMethod>(spec.mix_weight);
    case MethodKind::OracleMix: return std::make_unique<OracleMixMethod>();
    case MethodKind::FedTheLite:
      return std::make_unique<FedTheLite>(feature_mean(client.train.features),
                                          ctx.global_feature_mean, ctx.fedthe);
    case MethodKind::Btfl:
      return std::make_unique<BtflMethod>(
          BtflAdapter(client.local_dle, client.global_dle, client.baselines, ctx.adapter));
  }
  throw ConfigError("methods", "unhandled method kind");
}

}  // namespace btfl
