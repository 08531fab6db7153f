#ifndef GTD_RUN_CONFIG_HPP
#define GTD_RUN_CONFIG_HPP

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gtd/data.hpp"
#include "gtd/trainer.hpp"

namespace gtd {

struct EvalConfig {
  std::vector<double> alphas{0.2, 0.3};
  std::vector<double> betas{0.1, 0.2, 0.3, 0.5};
  std::size_t samples = 25;
  std::size_t threads = 1;
};

/// Everything a CLI run reads: data, model, diffusion, train and eval sections.
/// model.classes and model.feature_dim are taken from the dataset, not from the file.
struct RunConfig {
  DataConfig data;
  GtdConfig gtd;
  EvalConfig eval;
  std::size_t checkpoint_every = 0;  ///< train.checkpoint_every; 0 writes only the final checkpoint

  void validate() const {
    GtdConfig probe = gtd;
    probe.validate();
    if (data.feature_dim < 1) throw ConfigError("data.feature_dim must be >= 1");
    if (!(data.noise_sigma >= 0.0)) throw ConfigError("data.noise_sigma must be >= 0");
    if (!(data.ambiguous_fraction >= 0.0 && data.ambiguous_fraction <= 1.0)) {
      throw ConfigError("data.ambiguous_fraction must be in [0,1]");
    }
    if (!(data.extra_sigma_max >= 0.0)) throw ConfigError("data.extra_sigma_max must be >= 0");
    if (eval.samples < 1) throw ConfigError("eval.samples must be >= 1");
    if (eval.threads < 1) throw ConfigError("eval.threads must be >= 1");
    if (eval.alphas.empty() || eval.betas.empty()) throw ConfigError("eval.alphas and eval.betas must be non-empty");
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not a number");
  return v;
}

template <class U>
U parse_unsigned(const std::string& key, const std::string& s) {
  U v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ConfigError(key + ": '" + s + "' is not a non-negative integer");
  }
  return v;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <class U>
Field unsigned_field(std::string key, U& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](const std::string& s) { ref = parse_unsigned<U>(key, s); }};
}

inline Field double_field(std::string key, double& ref) {
  return {key, [&ref] { return format_double(ref); }, [&ref, key](const std::string& s) { ref = parse_double(key, s); }};
}

inline Field list_field(std::string key, std::vector<double>& ref) {
  return {key, [&ref] { return format_list(ref); }, [&ref, key](const std::string& s) { ref = parse_list(key, s); }};
}

template <class E, class Parse>
Field enum_field(std::string key, E& ref, Parse parse) {
  return {key, [&ref] { return to_string(ref); }, [&ref, parse](const std::string& s) { ref = parse(s); }};
}

inline std::vector<Field> fields(RunConfig& c) {
  auto& m = c.gtd.model;
  auto& d = c.gtd.diffusion;
  auto& t = c.gtd.train;
  return {
      enum_field("data.grammar", c.data.grammar, parse_grammar_preset),
      unsigned_field("data.feature_dim", c.data.feature_dim),
      unsigned_field("data.train_count", c.data.train_count),
      unsigned_field("data.test_count", c.data.test_count),
      double_field("data.noise_sigma", c.data.noise_sigma),
      double_field("data.ambiguous_fraction", c.data.ambiguous_fraction),
      double_field("data.extra_sigma_max", c.data.extra_sigma_max),
      unsigned_field("data.seed", c.data.seed),
      unsigned_field("model.stages", m.stages),
      unsigned_field("model.layers", m.layers_per_stage),
      unsigned_field("model.channels", m.channels),
      unsigned_field("model.kernel_size", m.kernel_size),
      double_field("model.dropout", m.dropout_rate),
      enum_field("model.gating", m.gating_mode, parse_gating_mode),
      unsigned_field("model.embed_dim", m.embed_dim),
      Field{"diffusion.steps", [&d] { return std::to_string(d.steps); },
            [&d](const std::string& s) { d.steps = static_cast<int>(parse_unsigned<unsigned>("diffusion.steps", s)); }},
      Field{"diffusion.inference_steps", [&d] { return std::to_string(d.inference_steps); },
            [&d](const std::string& s) {
              d.inference_steps = static_cast<int>(parse_unsigned<unsigned>("diffusion.inference_steps", s));
            }},
      enum_field("diffusion.sampler", d.sampler, parse_sampler_kind),
      double_field("diffusion.self_cond_prob", d.self_cond_prob),
      enum_field("diffusion.schedule", d.schedule, parse_schedule_kind),
      enum_field("diffusion.label_scaling", d.label_scaling, parse_label_scaling),
      enum_field("train.mode", t.mode, parse_train_mode),
      enum_field("train.loss", t.loss, parse_loss_kind),
      double_field("train.obs_loss_weight", t.obs_loss_weight),
      double_field("train.lr", t.learning_rate),
      unsigned_field("train.batch_size", t.batch_size),
      unsigned_field("train.epochs", t.epochs),
      unsigned_field("train.seed", t.seed),
      list_field("train.alphas", t.alphas),
      list_field("train.betas", t.betas),
      unsigned_field("train.checkpoint_every", c.checkpoint_every),
      list_field("eval.alphas", c.eval.alphas),
      list_field("eval.betas", c.eval.betas),
      unsigned_field("eval.samples", c.eval.samples),
      unsigned_field("eval.threads", c.eval.threads),
  };
}

}  // namespace detail

/// Sets one "section.key" entry; unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (auto& f : detail::fields(c)) {
    if (f.key == key) {
      f.set(detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Applies a "section.key=value" override.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not section.key=value");
  set_config_value(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Every key with its resolved value, in section order, as INI text.
inline std::string to_ini(const RunConfig& config) {
  RunConfig copy = config;
  std::string out, section;
  for (const auto& f : detail::fields(copy)) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + ("[" + sec + "]\n");
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get() + "\n";
  }
  return out;
}

inline RunConfig parse_run_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set_config_value(c, section + "." + key, value.data());
  }
  return c;
}

/// Reads an optional INI file and applies overrides in order.
inline RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                                 const std::vector<std::string>& overrides) {
  RunConfig c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read config " + path->string());
    c = parse_run_config(in);
  }
  for (const auto& o : overrides) apply_override(c, o);
  c.validate();
  return c;
}

}  // namespace gtd

#endif  // GTD_RUN_CONFIG_HPP
