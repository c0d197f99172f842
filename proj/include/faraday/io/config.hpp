#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "faraday/error.hpp"
#include "faraday/pipeline.hpp"
#include "faraday/preparation.hpp"

namespace faraday::io {

using json = nlohmann::ordered_json;

enum class Command { simulate, demodulate, estimate, prepare, sweep };

inline std::string_view to_string(Command c) {
  switch (c) {
    case Command::simulate: return "simulate";
    case Command::demodulate: return "demodulate";
    case Command::estimate: return "estimate";
    case Command::prepare: return "prepare";
    case Command::sweep: return "sweep";
  }
  return "";
}

struct SweepSpec {
  std::string parameter;       // dotted path into the config document, e.g. run.probe.photon_flux
  std::vector<double> values;
  int seeds = 1;               // runs per value, seeds run.seed, run.seed + 1, ...

  bool operator==(const SweepSpec&) const = default;
};

// Recorded streams to process instead of simulating.
struct InputFiles {
  std::string stream;            // demodulate
  std::string polarimeter_diff;  // estimate
  std::string power_monitor;     // estimate

  bool operator==(const InputFiles&) const = default;
};

struct ExperimentSpec {
  Command command = Command::simulate;
  RunConfig run{};
  EstimationConfig estimation{};
  PreparationPolicy policy{};
  std::optional<SweepSpec> sweep;
  InputFiles input{};
  std::string output_dir = "out";

  Apparatus apparatus() const { return {run, estimation}; }
  bool operator==(const ExperimentSpec&) const = default;
};

namespace detail {

template <class Visitor>
void fields(Visitor& v, EnsembleState& e) {
  v("atom_number", e.atom_number);
  v("spin_sign", e.spin_sign);
  v("initial_atom_number", e.initial_atom_number);
}

template <class Visitor>
void fields(Visitor& v, TopFieldConfig& t) {
  v("rotation_frequency", t.rotation_frequency);
  v("initial_phase", t.initial_phase);
}

template <class Visitor>
void fields(Visitor& v, CouplingModel& c) {
  v("coupling_strength", c.coupling_strength);
  v("reference_detuning", c.reference_detuning);
}

template <class Visitor>
void fields(Visitor& v, ProbeDetectorConfig& p) {
  v("photon_flux", p.photon_flux);
  v("detection_efficiency", p.detection_efficiency);
  v("monitor_tap", p.monitor_tap);
  v("detuning", p.detuning);
  v("polarimeter_offset", p.polarimeter_offset);
  v("monitor_offset", p.monitor_offset);
  v("electronic_noise_density", p.electronic_noise_density);
  v("shot_noise", p.shot_noise);
  v("drift_amplitude", p.drift_amplitude);
  v("drift_frequency", p.drift_frequency);
  v("drift_ramp", p.drift_ramp);
}

template <class Visitor>
void fields(Visitor& v, LossModel& l) {
  v("absorption_loss_coefficient", l.absorption_loss_coefficient);
  v("background_loss_rate", l.background_loss_rate);
  v("stochastic", l.stochastic);
}

template <class Visitor>
void fields(Visitor& v, RunConfig& r) {
  v("duration", r.duration);
  v("sample_rate", r.sample_rate);
  v("seed", r.seed);
  v("pre_probe_dark_time", r.pre_probe_dark_time);
  v.section("ensemble", r.ensemble);
  v.section("top", r.top);
  v.section("coupling", r.coupling);
  v.section("probe", r.probe);
  v.section("loss", r.loss);
}

template <class Visitor>
void fields(Visitor& v, LockInConfig& l) {
  v("reference_frequency", l.reference_frequency);
  v("reference_phase", l.reference_phase);
  v("time_constant", l.time_constant);
  v("stages", l.stages);
  v("decimation", l.decimation);
}

template <class Visitor>
void fields(Visitor& v, NormalizationConfig& n) {
  v("moving_average_window", n.moving_average_window);
  v("dark_segment_begin", n.dark_segment_begin);
  v("dark_segment_end", n.dark_segment_end);
  v("exact_inversion", n.exact_inversion);
}

// Fit options and the settling rules live in one "fit" section.
template <class Visitor>
void fields(Visitor& v, EstimationConfig& e) {
  v("weighting", e.fit.weighting);
  v("correlated_residuals", e.fit.correlated_residuals);
  v("atom_loss_variance", e.fit.atom_loss_variance);
  v("max_iterations", e.fit.max_iterations);
  v("settle_fraction", e.settle_fraction);
  v("min_settle_time_constants", e.min_settle_time_constants);
  v("compensate_group_delay", e.compensate_group_delay);
}

template <class Visitor>
void fields(Visitor& v, PreparationPolicy& p) {
  v("target_atom_number", p.target_atom_number);
  v("tolerance", p.tolerance);
  v("max_iterations", p.max_iterations);
  v("probe_window", p.probe_window);
  v("cut_undershoot_factor", p.cut_undershoot_factor);
  v("actuation_relative_error", p.actuation_relative_error);
  v("initial_relative_spread", p.initial_relative_spread);
  v("compensate_measurement_loss", p.compensate_measurement_loss);
}

template <class Visitor>
void fields(Visitor& v, SweepSpec& s) {
  v("parameter", s.parameter);
  v("values", s.values);
  v("seeds", s.seeds);
}

template <class Visitor>
void fields(Visitor& v, InputFiles& f) {
  v("stream", f.stream);
  v("polarimeter_diff", f.polarimeter_diff);
  v("power_monitor", f.power_monitor);
}

template <class E>
struct EnumNames;

template <>
struct EnumNames<ShotNoiseModel> {
  static constexpr std::pair<ShotNoiseModel, std::string_view> table[] = {
      {ShotNoiseModel::gaussian, "gaussian"}, {ShotNoiseModel::poisson, "poisson"}, {ShotNoiseModel::off, "off"}};
};

template <>
struct EnumNames<FitWeighting> {
  static constexpr std::pair<FitWeighting, std::string_view> table[] = {{FitWeighting::uniform, "uniform"},
                                                                        {FitWeighting::amplitude, "amplitude"}};
};

template <>
struct EnumNames<Command> {
  static constexpr std::pair<Command, std::string_view> table[] = {{Command::simulate, "simulate"},
                                                                   {Command::demodulate, "demodulate"},
                                                                   {Command::estimate, "estimate"},
                                                                   {Command::prepare, "prepare"},
                                                                   {Command::sweep, "sweep"}};
};

template <class E>
concept NamedEnum = requires { EnumNames<E>::table; };

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + ": expected a section (object)");
  }

  template <class T>
  void operator()(const char* key, T& value) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    const json& j = node_.at(key);
    const std::string at = child(key);
    try {
      read(j, value, at);
    } catch (const json::exception& e) {
      throw ConfigError(at + ": " + e.what());
    }
  }

  template <class T>
  void section(const char* key, T& value) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    Reader sub(node_.at(key), child(key));
    fields(sub, value);
    sub.finish();
  }

  template <class T>
  void optional_section(const char* key, std::optional<T>& value) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    value.emplace();
    section(key, *value);
  }

  // Unknown keys are errors.
  void finish() const {
    for (const auto& [k, _] : node_.items())
      if (!seen_.count(k)) throw ConfigError(child(k) + ": unknown key");
  }

 private:
  std::string where() const { return path_.empty() ? "<document>" : path_; }
  std::string child(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  static void read(const json& j, double& v, const std::string& at) {
    if (!j.is_number()) throw ConfigError(at + ": expected a number");
    v = j.get<double>();
  }
  static void read(const json& j, int& v, const std::string& at) {
    if (!j.is_number_integer()) throw ConfigError(at + ": expected an integer");
    v = j.get<int>();
  }
  static void read(const json& j, std::uint64_t& v, const std::string& at) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
      throw ConfigError(at + ": expected a non-negative integer");
    v = j.get<std::uint64_t>();
  }
  static void read(const json& j, bool& v, const std::string& at) {
    if (!j.is_boolean()) throw ConfigError(at + ": expected true or false");
    v = j.get<bool>();
  }
  static void read(const json& j, std::string& v, const std::string& at) {
    if (!j.is_string()) throw ConfigError(at + ": expected a string");
    v = j.get<std::string>();
  }
  static void read(const json& j, std::vector<double>& v, const std::string& at) {
    if (!j.is_array()) throw ConfigError(at + ": expected an array of numbers");
    v.clear();
    for (const auto& x : j) {
      if (!x.is_number()) throw ConfigError(at + ": expected an array of numbers");
      v.push_back(x.get<double>());
    }
  }
  template <NamedEnum E>
  static void read(const json& j, E& v, const std::string& at) {
    if (j.is_string())
      for (const auto& [value, name] : EnumNames<E>::table)
        if (name == j.get<std::string>()) {
          v = value;
          return;
        }
    std::string allowed;
    for (const auto& [value, name] : EnumNames<E>::table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    throw ConfigError(at + ": expected one of {" + allowed + "}");
  }

  const json& node_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

class Writer {
 public:
  template <class T>
  void operator()(const char* key, const T& value) {
    if constexpr (NamedEnum<T>) {
      for (const auto& [v, name] : EnumNames<T>::table)
        if (v == value) out[key] = std::string(name);
    } else {
      out[key] = value;
    }
  }

  template <class T>
  void section(const char* key, T& value) {
    Writer sub;
    fields(sub, value);
    out[key] = std::move(sub.out);
  }

  json out = json::object();
};

template <class T>
json write_section(T value) {
  Writer w;
  fields(w, value);
  return std::move(w.out);
}

inline std::string line_context(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

// Fully resolved document for a spec; parse_config(emit_config(s)) == s.
inline json emit_config_json(const ExperimentSpec& spec) {
  json doc = json::object();
  doc["command"] = std::string(to_string(spec.command));
  doc["output_dir"] = spec.output_dir;
  doc["run"] = detail::write_section(spec.run);
  doc["lockin"] = detail::write_section(spec.estimation.lockin);
  doc["normalization"] = detail::write_section(spec.estimation.normalization);
  doc["fit"] = detail::write_section(spec.estimation);
  doc["policy"] = detail::write_section(spec.policy);
  doc["input"] = detail::write_section(spec.input);
  if (spec.sweep) doc["sweep"] = detail::write_section(*spec.sweep);
  return doc;
}

inline std::string emit_config(const ExperimentSpec& spec) { return emit_config_json(spec).dump(2) + "\n"; }

inline json::json_pointer dotted_pointer(const std::string& dotted) {
  std::string p = "/" + dotted;
  for (char& c : p)
    if (c == '.') c = '/';
  return json::json_pointer(p);
}

// Checks every module's invariants for the chosen command.
inline void validate(const ExperimentSpec& spec) {
  spec.run.validate();
  spec.estimation.validate();
  spec.estimation.lockin.validate_for(spec.run.sample_rate);
  spec.estimation.normalization.validate_for(spec.run.sample_rate, spec.run.pre_probe_dark_time);
  if (spec.command == Command::prepare) spec.policy.validate();
  if (spec.command == Command::demodulate && spec.input.stream.empty())
    throw ConfigError("input.stream: demodulate needs an input stream file");
  if (spec.command == Command::estimate && (spec.input.polarimeter_diff.empty() != spec.input.power_monitor.empty()))
    throw ConfigError("input: estimate needs both polarimeter_diff and power_monitor, or neither");
  if (spec.command == Command::sweep) {
    if (!spec.sweep) throw ConfigError("sweep: section required for the sweep command");
    if (spec.sweep->values.empty()) throw ConfigError("sweep.values: must list at least one value");
    if (spec.sweep->seeds < 1) throw ConfigError("sweep.seeds must be >= 1 (got " + std::to_string(spec.sweep->seeds) + ")");
    const json doc = emit_config_json(spec);
    const json::json_pointer at = dotted_pointer(spec.sweep->parameter);
    if (spec.sweep->parameter.empty() || !doc.contains(at) || !doc.at(at).is_number())
      throw ConfigError("sweep.parameter: '" + spec.sweep->parameter + "' does not name a numeric configuration value");
  }
}

// Reads and resolves a document; validation can be deferred for partial edits.
inline ExperimentSpec parse_config_json(const json& doc, bool check = true) {
  if (!doc.is_object()) throw ConfigError("<document>: expected a JSON object with sections");
  std::vector<std::string> missing;
  for (const char* required : {"command", "run"})
    if (!doc.contains(required)) missing.emplace_back(required);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ConfigError("missing required sections: " + list + " (optional: lockin, normalization, fit, policy, sweep, input, output_dir)");
  }

  ExperimentSpec spec;
  detail::Reader top(doc, "");
  top("command", spec.command);
  top("output_dir", spec.output_dir);
  top.section("run", spec.run);
  top.section("lockin", spec.estimation.lockin);
  top.section("normalization", spec.estimation.normalization);
  top.section("fit", spec.estimation);
  top.section("policy", spec.policy);
  top.section("input", spec.input);
  top.optional_section("sweep", spec.sweep);
  top.finish();

  // Defaults that depend on other sections.
  const json& lockin = doc.contains("lockin") ? doc.at("lockin") : json::object();
  if (!lockin.contains("reference_frequency")) spec.estimation.lockin.reference_frequency = spec.run.top.rotation_frequency;
  const json& norm = doc.contains("normalization") ? doc.at("normalization") : json::object();
  if (!norm.contains("dark_segment_end")) spec.estimation.normalization.dark_segment_end = spec.run.pre_probe_dark_time;
  if (!norm.contains("dark_segment_begin")) spec.estimation.normalization.dark_segment_begin = 0.0;

  if (check) validate(spec);
  return spec;
}


// Applies key=value overrides to a user document. Each key must exist in the
// fully resolved document; the value is read as JSON, falling back to a plain
// string. Overrides land in the user document so dependent defaults still
// follow them.
inline json apply_overrides(json document, const std::vector<std::string>& overrides) {
  const json resolved = emit_config_json(parse_config_json(document, false));
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "': expected key=value");
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    const json::json_pointer ptr = dotted_pointer(key);
    if (!resolved.contains(ptr)) throw ConfigError("override '" + key + "': no such configuration key");
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    document[ptr] = value;
  }
  return document;
}

inline json parse_document(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error at " + detail::line_context(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
}

inline ExperimentSpec parse_config(std::string_view text) { return parse_config_json(parse_document(text)); }

}  // namespace faraday::io
