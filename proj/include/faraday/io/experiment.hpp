#pragma once

#include <cmath>
#include <exception>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "faraday/io/config.hpp"
#include "faraday/io/report.hpp"
#include "faraday/io/stream_file.hpp"
#include "faraday/lockin.hpp"
#include "faraday/pipeline.hpp"
#include "faraday/preparation.hpp"
#include "faraday/stats.hpp"

namespace faraday::io {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 2;
inline constexpr int estimation = 3;
inline constexpr int preparation = 4;
inline constexpr int io = 5;
inline constexpr int internal = 1;
}  // namespace exit_code

// Maps the error hierarchy onto process exit codes. Contract violations on
// stream data surface from the estimation chain, so they share its code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return exit_code::config;
  if (dynamic_cast<const EstimationError*>(&e)) return exit_code::estimation;
  if (dynamic_cast<const ContractError*>(&e)) return exit_code::estimation;
  if (dynamic_cast<const PreparationError*>(&e)) return exit_code::preparation;
  if (dynamic_cast<const IoError*>(&e)) return exit_code::io;
  return exit_code::internal;
}

struct RunOptions {
  std::filesystem::path output_dir = "out";
  std::ostream* log = nullptr;  // progress lines; null for quiet
};

struct ExperimentOutcome {
  int exit_code = exit_code::ok;
  std::vector<std::filesystem::path> files;
  std::string summary;
};

namespace detail {

class Artifacts {
 public:
  Artifacts(const RunOptions& options, ExperimentOutcome& outcome) : options_(options), outcome_(outcome) {}

  void stream(const std::string& name, const SampleStream& s, const Provenance& prov) { text(name, format_stream(s, prov)); }

  void text(const std::string& name, const std::string& body) {
    const std::filesystem::path path = options_.output_dir / name;
    write_text(path, body);
    outcome_.files.push_back(path);
    if (options_.log) *options_.log << "wrote " << path.string() << "\n";
  }

 private:
  const RunOptions& options_;
  ExperimentOutcome& outcome_;
};

inline ExperimentOutcome run_simulate(const ExperimentSpec& spec, const RunOptions& options) {
  ExperimentOutcome out;
  Artifacts files(options, out);
  const Provenance prov = provenance_of(spec);
  const RunStreams raw = synthesize_run(spec.run);
  files.stream("polarimeter_diff.csv", raw.polarimeter_diff, prov);
  files.stream("power_monitor.csv", raw.power_monitor, prov);
  files.stream("atom_number_truth.csv", raw.atom_number_truth, prov);
  files.stream("atom_number_envelope.csv", mean_decay_envelope(spec.run), prov);
  json body = json::object();
  body["samples"] = raw.polarimeter_diff.size();
  body["initial_atom_number_atoms"] = spec.run.ensemble.atom_number;
  body["final_atom_number_atoms"] = raw.final_atom_number;
  body["loss_rate_per_s"] = spec.run.loss_rate();
  files.text("simulate_report.json", format_report("simulate", std::move(body), prov));
  out.summary = "simulated " + std::to_string(raw.polarimeter_diff.size()) + " samples, final atom number " +
                format_double(raw.final_atom_number);
  return out;
}

inline ExperimentOutcome run_demodulate(const ExperimentSpec& spec, const RunOptions& options) {
  ExperimentOutcome out;
  Artifacts files(options, out);
  const StreamFile in = read_stream(spec.input.stream);
  spec.estimation.lockin.validate_for(in.stream.sample_rate);
  const Provenance prov = provenance_of(spec);
  DemodOutput iq = demodulate(in.stream, spec.estimation.lockin);
  const PolarOutput polar = magnitude_phase(iq.i, iq.q);
  files.stream("demod_i.csv", iq.i, prov);
  files.stream("demod_q.csv", iq.q, prov);
  files.stream("demod_magnitude.csv", polar.magnitude, prov);
  files.stream("demod_phase.csv", polar.phase, prov);
  out.summary = "demodulated " + std::to_string(in.stream.size()) + " samples into " + std::to_string(iq.i.size()) + " I/Q samples";
  return out;
}

inline RunEstimate estimate_from_spec(const ExperimentSpec& spec) {
  if (spec.input.polarimeter_diff.empty()) return simulate_and_estimate(spec.run, spec.estimation);
  const StreamFile diff = read_stream(spec.input.polarimeter_diff);
  const StreamFile monitor = read_stream(spec.input.power_monitor);
  if (diff.stream.sample_rate != spec.run.sample_rate)
    throw ConfigError("run.sample_rate " + format_double(spec.run.sample_rate) + " Hz does not match the recorded stream's " +
                      format_double(diff.stream.sample_rate) + " Hz");
  return estimate_run(diff.stream, monitor.stream, spec.run, spec.estimation);
}

inline ExperimentOutcome run_estimate(const ExperimentSpec& spec, const RunOptions& options) {
  ExperimentOutcome out;
  Artifacts files(options, out);
  const Provenance prov = provenance_of(spec);
  const RunEstimate r = estimate_from_spec(spec);
  files.stream("atom_number_estimate.csv", r.streams.atom_number_estimate, prov);
  files.stream("demod_i.csv", r.streams.demod_i, prov);
  files.stream("demod_q.csv", r.streams.demod_q, prov);
  files.stream("demod_magnitude.csv", r.streams.magnitude, prov);
  files.text("trace.csv", format_trace_csv(r.record, prov));
  files.text("estimate_report.json", format_report("estimate", to_json(r.record), prov));
  out.summary = "N0 = " + format_double(r.record.fitted_n0) + " +/- " + format_double(r.record.n0_uncertainty) +
                " atoms, gamma = " + format_double(r.record.fitted_gamma) + " +/- " + format_double(r.record.gamma_uncertainty) +
                " /s";
  return out;
}

inline ExperimentOutcome run_prepare(const ExperimentSpec& spec, const RunOptions& options) {
  ExperimentOutcome out;
  Artifacts files(options, out);
  const Provenance prov = provenance_of(spec);
  const PreparationResult r = prepare(spec.run.ensemble, spec.policy, spec.apparatus(), spec.run.seed);
  files.text("prepare_report.json", format_report("prepare", to_json(r), prov));
  files.text("trajectory.csv", format_trajectory_csv(r, prov));
  out.summary = std::string(r.success ? "prepared " : "preparation failed: ") + format_double(r.final_atom_number) +
                " atoms after " + std::to_string(r.iterations_used) + " iterations (" + r.diagnosis + ")";
  if (!r.success) out.exit_code = exit_code::preparation;
  return out;
}

inline double sem(const std::vector<double>& v) {
  return v.size() > 1 ? std::sqrt(stats::sample_variance(v) / static_cast<double>(v.size())) : 0.0;
}

// Each sweep value runs the simulate + estimate chain once per seed.
inline ExperimentOutcome run_sweep(const ExperimentSpec& spec, const RunOptions& options) {
  ExperimentOutcome out;
  Artifacts files(options, out);
  const SweepSpec& sweep = *spec.sweep;
  const json base = emit_config_json(spec);
  const json::json_pointer at = dotted_pointer(sweep.parameter);
  std::vector<SweepPoint> points;

  for (std::size_t v = 0; v < sweep.values.size(); ++v) {
    json doc = base;
    doc[at] = sweep.values[v];
    const ExperimentSpec point_spec = parse_config_json(doc);
    std::vector<double> angle_var, var, shot, gamma, gamma_u, n0, rms;
    json runs = json::array();
    for (int s = 0; s < sweep.seeds; ++s) {
      RunConfig run = point_spec.run;
      run.seed = point_spec.run.seed + static_cast<std::uint64_t>(s);
      const RunEstimate r = simulate_and_estimate(run, point_spec.estimation);
      const NoiseReport& n = *r.record.noise_report;
      angle_var.push_back(n.measured_angle_variance);
      var.push_back(n.measured_variance);
      shot.push_back(n.predicted_shot_variance);
      gamma.push_back(r.record.fitted_gamma);
      gamma_u.push_back(r.record.gamma_uncertainty);
      n0.push_back(r.record.fitted_n0);
      rms.push_back(r.record.residual_rms);
      json entry = to_json(r.record);
      entry["seed"] = run.seed;
      runs.push_back(std::move(entry));
    }
    SweepPoint p;
    p.value = sweep.values[v];
    p.runs = sweep.seeds;
    p.mean_angle_variance = stats::mean(angle_var);
    p.angle_variance_sem = sem(angle_var);
    p.mean_variance = stats::mean(var);
    p.mean_predicted_shot_variance = stats::mean(shot);
    p.mean_gamma = stats::mean(gamma);
    p.gamma_sem = sem(gamma);
    p.mean_gamma_uncertainty = stats::mean(gamma_u);
    p.mean_n0 = stats::mean(n0);
    p.mean_residual_rms = stats::mean(rms);
    points.push_back(p);

    json body = json::object();
    body["parameter"] = sweep.parameter;
    body["value"] = p.value;
    body["mean_angle_variance_rad2"] = p.mean_angle_variance;
    body["mean_gamma_per_s"] = p.mean_gamma;
    body["runs"] = std::move(runs);
    files.text("sweep_" + std::to_string(v) + ".json", format_report("sweep_point", std::move(body), provenance_of(point_spec)));
    if (options.log)
      *options.log << sweep.parameter << " = " << format_double(p.value) << ": angle variance " << format_double(p.mean_angle_variance)
                   << " rad^2\n";
  }
  files.text("sweep_summary.csv", format_sweep_summary(sweep.parameter, points, provenance_of(spec)));
  out.summary = "swept " + sweep.parameter + " over " + std::to_string(points.size()) + " values";
  return out;
}

}  // namespace detail

// Runs the spec's command and writes its artifacts under options.output_dir.
// Module errors propagate as exceptions; an unsuccessful preparation is
// reported through the exit code.
inline ExperimentOutcome run_experiment(const ExperimentSpec& spec, const RunOptions& options = {}) {
  validate(spec);
  switch (spec.command) {
    case Command::simulate: return detail::run_simulate(spec, options);
    case Command::demodulate: return detail::run_demodulate(spec, options);
    case Command::estimate: return detail::run_estimate(spec, options);
    case Command::prepare: return detail::run_prepare(spec, options);
    case Command::sweep: return detail::run_sweep(spec, options);
  }
  throw ConfigError("unknown command");
}

}  // namespace faraday::io
