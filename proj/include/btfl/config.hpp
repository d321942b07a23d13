#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "btfl/adapter.hpp"
#include "btfl/baselines.hpp"
#include "btfl/bench.hpp"
#include "btfl/error.hpp"
#include "btfl/fed_sim.hpp"

namespace btfl {

// Full run configuration: training, adaptation, benchmark, output.
struct ExperimentConfig {
  ExperimentParams experiment;
  AdapterOptions adapter;
  FedTheLiteOptions fedthe;
  std::size_t n_per_stream = 1000;
  ShiftParams shift;
  std::vector<MethodSpec> methods = default_methods();
  std::size_t workers = 0;
  std::string output_dir = "out";

  static std::vector<MethodSpec> default_methods() {
    return {{MethodKind::LocalOnly}, {MethodKind::GlobalOnly},     {MethodKind::FixedMix, 0.5},
            {MethodKind::OracleMix}, {MethodKind::FedTheLite}, {MethodKind::Btfl}};
  }

  BenchParams bench_params() const { return {n_per_stream, shift, methods, workers}; }
  MethodContext method_context() const { return {adapter, fedthe, {}}; }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(std::string_view text, const std::string& field) {
  text = trim(text);
  T v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(field, "cannot parse '" + std::string(text) + "'");
  }
  return v;
}

inline bool parse_bool(std::string_view text, const std::string& field) {
  text = trim(text);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(field, "expected true or false, got '" + std::string(text) + "'");
}

inline std::vector<MethodSpec> parse_method_list(std::string_view text) {
  std::vector<MethodSpec> out;
  while (true) {
    auto comma = text.find(',');
    auto item = trim(text.substr(0, comma));
    if (!item.empty()) out.push_back(parse_method(item));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

inline std::string format_method_list(const std::vector<MethodSpec>& methods) {
  std::string out;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (i) out += ", ";
    out += methods[i].name();
  }
  return out;
}

// One configurable scalar, addressed as section.key. Values travel as text
// so INI and JSON share a single code path.
struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  enum class Kind { Integer, Real, Boolean, Text } kind;

  std::string name() const { return section + "." + key; }
};

inline std::vector<Field> build_fields() {
  std::vector<Field> f;
  auto add_size = [&](std::string sec, std::string key, auto getter) {
    std::string name = sec + "." + key;
    f.push_back({sec, key,
                 [getter](const ExperimentConfig& c) {
                   return std::to_string(getter(c));
                 },
                 [getter, name](ExperimentConfig& c, std::string_view v) {
                   getter(c) = parse_number<std::remove_reference_t<decltype(getter(c))>>(v, name);
                 },
                 Field::Kind::Integer});
  };
  auto add_real = [&](std::string sec, std::string key, auto getter) {
    std::string name = sec + "." + key;
    f.push_back({sec, key,
                 [getter](const ExperimentConfig& c) {
                   return format_double(getter(c));
                 },
                 [getter, name](ExperimentConfig& c, std::string_view v) {
                   getter(c) = parse_number<double>(v, name);
                 },
                 Field::Kind::Real});
  };

  add_size("task", "n_classes", [](auto& c) -> auto& { return c.experiment.task.n_classes; });
  add_size("task", "feature_dim", [](auto& c) -> auto& { return c.experiment.task.feature_dim; });
  add_size("task", "raw_dim", [](auto& c) -> auto& { return c.experiment.task.raw_dim; });
  add_real("task", "noise_sigma", [](auto& c) -> auto& { return c.experiment.task.noise_sigma; });
  add_real("task", "class_separation",
           [](auto& c) -> auto& { return c.experiment.task.class_separation; });
  add_real("task", "extractor_gain",
           [](auto& c) -> auto& { return c.experiment.task.extractor_gain; });

  add_size("federation", "n_clients", [](auto& c) -> auto& { return c.experiment.n_clients; });
  add_real("federation", "concentration",
           [](auto& c) -> auto& { return c.experiment.concentration; });
  add_size("federation", "train_samples",
           [](auto& c) -> auto& { return c.experiment.train_samples; });
  add_size("federation", "seed", [](auto& c) -> auto& { return c.experiment.seed; });

  add_size("training", "rounds", [](auto& c) -> auto& { return c.experiment.training.rounds; });
  add_size("training", "local_epochs",
           [](auto& c) -> auto& { return c.experiment.training.local_epochs; });
  add_real("training", "lr", [](auto& c) -> auto& { return c.experiment.training.lr; });
  add_real("training", "lr_decay", [](auto& c) -> auto& { return c.experiment.training.lr_decay; });
  add_size("training", "personalize_epochs",
           [](auto& c) -> auto& { return c.experiment.training.personalize_epochs; });
  add_real("training", "personalize_lr",
           [](auto& c) -> auto& { return c.experiment.training.personalize_lr; });

  add_real("adapter", "lambda", [](auto& c) -> auto& { return c.adapter.lambda; });
  add_size("adapter", "quad_panels", [](auto& c) -> auto& { return c.adapter.quadrature.panels; });
  add_real("adapter", "quad_tol", [](auto& c) -> auto& { return c.adapter.quadrature.abs_tol; });
  add_size("adapter", "quad_max_doublings",
           [](auto& c) -> auto& { return c.adapter.quadrature.max_doublings; });
  f.push_back({"adapter", "hbu_enabled",
               [](const ExperimentConfig& c) { return std::string(c.adapter.hbu_enabled ? "true" : "false"); },
               [](ExperimentConfig& c, std::string_view v) {
                 c.adapter.hbu_enabled = parse_bool(v, "adapter.hbu_enabled");
               },
               Field::Kind::Boolean});

  add_real("fedthe", "initial_e", [](auto& c) -> auto& { return c.fedthe.initial_e; });
  add_real("fedthe", "ema_ratio", [](auto& c) -> auto& { return c.fedthe.ema_ratio; });
  add_size("fedthe", "steps", [](auto& c) -> auto& { return c.fedthe.steps; });
  add_real("fedthe", "step_size", [](auto& c) -> auto& { return c.fedthe.step_size; });
  add_real("fedthe", "fd_step", [](auto& c) -> auto& { return c.fedthe.fd_step; });

  add_size("bench", "n_per_stream", [](auto& c) -> auto& { return c.n_per_stream; });
  add_real("bench", "corruption_sigma", [](auto& c) -> auto& { return c.shift.corruption_sigma; });
  add_real("bench", "domain_strength", [](auto& c) -> auto& { return c.shift.domain_strength; });
  f.push_back({"bench", "methods",
               [](const ExperimentConfig& c) { return format_method_list(c.methods); },
               [](ExperimentConfig& c, std::string_view v) { c.methods = parse_method_list(v); },
               Field::Kind::Text});
  add_size("bench", "workers", [](auto& c) -> auto& { return c.workers; });

  f.push_back({"output", "dir", [](const ExperimentConfig& c) { return c.output_dir; },
               [](ExperimentConfig& c, std::string_view v) { c.output_dir = std::string(trim(v)); },
               Field::Kind::Text});
  return f;
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = build_fields();
  return table;
}

inline const Field& find_field(std::string_view section, std::string_view key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return f;
  }
  throw ConfigError(std::string(section) + "." + std::string(key), "unknown key");
}

}  // namespace detail

// Rejects values the pipeline cannot run with. The error names the field.
inline void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const char* field, const std::string& what) {
    if (!ok) throw ConfigError(field, what);
  };
  const auto& t = c.experiment.task;
  require(t.n_classes >= 2, "task.n_classes", "must be >= 2");
  require(t.feature_dim >= 1, "task.feature_dim", "must be >= 1");
  require(t.raw_dim >= 1, "task.raw_dim", "must be >= 1");
  require(std::isfinite(t.noise_sigma) && t.noise_sigma > 0.0, "task.noise_sigma", "must be finite and > 0");
  require(std::isfinite(t.class_separation) && t.class_separation > 0.0, "task.class_separation",
          "must be finite and > 0");
  require(std::isfinite(t.extractor_gain) && t.extractor_gain > 0.0, "task.extractor_gain",
          "must be finite and > 0");

  require(c.experiment.n_clients >= 1, "federation.n_clients", "must be >= 1");
  require(std::isfinite(c.experiment.concentration) && c.experiment.concentration > 0.0,
          "federation.concentration", "must be finite and > 0");
  require(c.experiment.train_samples >= 1, "federation.train_samples", "must be >= 1");

  const auto& tr = c.experiment.training;
  require(tr.rounds >= 1, "training.rounds", "must be >= 1");
  require(tr.local_epochs >= 1, "training.local_epochs", "must be >= 1");
  require(std::isfinite(tr.lr) && tr.lr > 0.0, "training.lr", "must be finite and > 0");
  require(std::isfinite(tr.lr_decay) && tr.lr_decay > 0.0 && tr.lr_decay <= 1.0, "training.lr_decay",
          "must lie in (0, 1]");
  require(std::isfinite(tr.personalize_lr) && tr.personalize_lr >= 0.0, "training.personalize_lr",
          "must be finite and >= 0");

  // Pruning maps alpha + beta to 3 - 1/(alpha+beta) < 3, so lambda must be at
  // least 3 for the count bound to hold after every update.
  require(std::isfinite(c.adapter.lambda) && c.adapter.lambda >= 3.0, "adapter.lambda", "must be >= 3");
  require(c.adapter.quadrature.panels >= 16 && c.adapter.quadrature.panels % 2 == 0, "adapter.quad_panels",
          "must be even and >= 16");
  require(std::isfinite(c.adapter.quadrature.abs_tol) && c.adapter.quadrature.abs_tol > 0.0,
          "adapter.quad_tol", "must be finite and > 0");
  require(c.adapter.quadrature.max_doublings >= 0 && c.adapter.quadrature.max_doublings <= 24,
          "adapter.quad_max_doublings", "must lie in [0, 24]");

  require(c.fedthe.initial_e >= 0.0 && c.fedthe.initial_e <= 1.0, "fedthe.initial_e", "must lie in [0, 1]");
  require(c.fedthe.ema_ratio >= 0.0 && c.fedthe.ema_ratio < 1.0, "fedthe.ema_ratio", "must lie in [0, 1)");
  require(std::isfinite(c.fedthe.step_size) && c.fedthe.step_size > 0.0, "fedthe.step_size",
          "must be finite and > 0");
  require(std::isfinite(c.fedthe.fd_step) && c.fedthe.fd_step > 0.0 && c.fedthe.fd_step < 0.5,
          "fedthe.fd_step", "must lie in (0, 0.5)");

  require(c.n_per_stream >= 4 && c.n_per_stream % 4 == 0, "bench.n_per_stream",
          "must be a positive multiple of 4");
  require(std::isfinite(c.shift.corruption_sigma) && c.shift.corruption_sigma >= 0.0, "bench.corruption_sigma",
          "must be finite and >= 0");
  require(std::isfinite(c.shift.domain_strength) && c.shift.domain_strength >= 0.0, "bench.domain_strength",
          "must be finite and >= 0");
  require(!c.methods.empty(), "bench.methods", "must list at least one method");
  for (std::size_t i = 0; i < c.methods.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      require(c.methods[i].name() != c.methods[j].name(), "bench.methods",
              "duplicate method " + c.methods[i].name());
    }
  }
  require(!c.output_dir.empty(), "output.dir", "must not be empty");
}

// INI-style text: [section] headers, key = value lines, '#' or ';' comments.
// Keys not in the schema are rejected. Missing keys keep their defaults.
inline ExperimentConfig parse_ini(std::string_view text) {
  ExperimentConfig c;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no), "unterminated section header");
      }
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    }
    auto key = detail::trim(line.substr(0, eq));
    auto value = detail::trim(line.substr(eq + 1));
    detail::find_field(section, key).set(c, value);
  }
  return c;
}

inline std::string to_ini(const ExperimentConfig& c) {
  std::string out;
  std::string section;
  for (const auto& f : detail::fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : detail::fields()) {
    const std::string v = f.get(c);
    auto& slot = j[f.section][f.key];
    switch (f.kind) {
      case detail::Field::Kind::Integer:
        slot = detail::parse_number<std::uint64_t>(v, f.name());
        break;
      case detail::Field::Kind::Real:
        slot = detail::parse_number<double>(v, f.name());
        break;
      case detail::Field::Kind::Boolean:
        slot = (v == "true");
        break;
      case detail::Field::Kind::Text:
        slot = v;
        break;
    }
  }
  return j;
}

inline ExperimentConfig from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) throw ConfigError(section, "expected an object of keys");
    for (const auto& [key, value] : body.items()) {
      const auto& f = detail::find_field(section, key);
      std::string text;
      if (value.is_string()) {
        text = value.get<std::string>();
      } else if (value.is_boolean()) {
        text = value.get<bool>() ? "true" : "false";
      } else if (value.is_number_integer() || value.is_number_unsigned()) {
        if (value.is_number_integer() && !value.is_number_unsigned() && value.get<std::int64_t>() < 0 &&
            f.kind == detail::Field::Kind::Integer) {
          throw ConfigError(f.name(), "must be non-negative");
        }
        text = value.dump();
      } else if (value.is_number_float()) {
        text = detail::format_double(value.get<double>());
      } else if (value.is_array() && f.key == "methods") {
        for (std::size_t i = 0; i < value.size(); ++i) {
          if (i) text += ",";
          text += value[i].get<std::string>();
        }
      } else {
        throw ConfigError(f.name(), "unsupported value type");
      }
      f.set(c, text);
    }
  }
  return c;
}

// Picks the encoding by the first non-blank character.
inline ExperimentConfig parse_config(std::string_view text) {
  auto t = detail::trim(text);
  if (!t.empty() && t.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(t);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("<json>", e.what());
    }
    return from_json(j);
  }
  return parse_ini(text);
}

// BTFL_SEED, when set, replaces the master seed.
inline void apply_env_overrides(ExperimentConfig& c, const char* seed_env = std::getenv("BTFL_SEED")) {
  if (seed_env == nullptr || *seed_env == '\0') return;
  c.experiment.seed = detail::parse_number<std::uint64_t>(seed_env, "BTFL_SEED");
}

}  // namespace btfl
