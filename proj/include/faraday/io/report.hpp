#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "faraday/io/config.hpp"
#include "faraday/io/stream_file.hpp"
#include "faraday/pipeline.hpp"
#include "faraday/preparation.hpp"

namespace faraday::io {

inline std::string_view to_string(CutStage s) {
  switch (s) {
    case CutStage::none: return "none";
    case CutStage::staging: return "staging";
    case CutStage::final_approach: return "final_approach";
  }
  return "";
}

inline Provenance provenance_of(const ExperimentSpec& spec) { return {emit_config_json(spec).dump(), spec.run.seed}; }

inline json provenance_json(const Provenance& prov) {
  json p = json::object();
  p["seed"] = prov.seed;
  p["spec_hash"] = prov.spec_hash();
  p["spec"] = json::parse(prov.spec_json);
  return p;
}

inline json to_json(const NoiseReport& n) {
  json j = json::object();
  j["measured_variance_atoms2"] = n.measured_variance;
  j["measured_angle_variance_rad2"] = n.measured_angle_variance;
  j["equivalent_noise_bandwidth_hz"] = n.equivalent_noise_bandwidth;
  j["predicted_shot_variance_atoms2"] = n.predicted_shot_variance;
  j["predicted_polarimeter_shot_variance_atoms2"] = n.predicted_polarimeter_shot_variance;
  j["predicted_monitor_shot_variance_atoms2"] = n.predicted_monitor_shot_variance;
  j["predicted_loss_variance_atoms2"] = n.predicted_loss_variance;
  j["predicted_electronic_variance_atoms2"] = n.predicted_electronic_variance;
  j["remainder_variance_atoms2"] = n.remainder_variance;
  j["residual_correlation_time_s"] = n.residual_correlation_time;
  j["lockin_correlation_time_s"] = n.lockin_correlation_time;
  j["integrated_correlation_time_s"] = n.integrated_correlation_time;
  return j;
}

inline json to_json(const MeasurementRecord& r) {
  json j = json::object();
  json fit = json::object();
  fit["n0_atoms"] = r.fitted_n0;
  fit["n0_uncertainty_atoms"] = r.n0_uncertainty;
  fit["gamma_per_s"] = r.fitted_gamma;
  fit["gamma_uncertainty_per_s"] = r.gamma_uncertainty;
  fit["residual_rms_atoms"] = r.residual_rms;
  fit["time_origin_s"] = r.time_origin;
  fit["fit_begin_s"] = r.fit_begin;
  fit["samples"] = r.fit_samples;
  fit["iterations"] = r.iterations;
  fit["residual_correlation_samples"] = r.residual_correlation_samples;
  j["fit"] = std::move(fit);
  const SampleStream& s = r.atom_number_estimate;
  json est = json::object();
  est["samples"] = s.size();
  est["sample_rate_hz"] = s.sample_rate;
  est["start_time_s"] = s.start_time;
  j["estimate_stream"] = std::move(est);
  if (r.noise_report) j["noise"] = to_json(*r.noise_report);
  return j;
}

inline json to_json(const PreparationResult& r) {
  json j = json::object();
  j["success"] = r.success;
  j["diagnosis"] = r.diagnosis;
  j["iterations_used"] = r.iterations_used;
  j["final_atom_number_atoms"] = r.final_atom_number;
  j["final_estimate_atoms"] = r.final_estimate;
  j["final_uncertainty_atoms"] = r.final_uncertainty;
  j["probe_loss_total_atoms"] = r.probe_loss_total;
  j["cut_loss_total_atoms"] = r.cut_loss_total;
  json steps = json::array();
  for (const auto& s : r.trajectory) {
    json t = json::object();
    t["truth_before_atoms"] = s.truth_before;
    t["estimate_atoms"] = s.estimate;
    t["estimate_uncertainty_atoms"] = s.estimate_uncertainty;
    t["truth_after_measurement_atoms"] = s.truth_after_measurement;
    t["cut_fraction"] = s.cut_fraction;
    t["post_cut_truth_atoms"] = s.post_cut_truth;
    t["stage"] = std::string(to_string(s.stage));
    steps.push_back(std::move(t));
  }
  j["trajectory"] = std::move(steps);
  return j;
}

inline std::string format_report(const std::string& kind, json body, const Provenance& prov) {
  json doc = json::object();
  doc["report"] = kind;
  for (auto& [k, v] : body.items()) doc[k] = v;
  doc["provenance"] = provenance_json(prov);
  return doc.dump(2) + "\n";
}

// Comment header shared by the plot-ready CSV files.
inline std::string csv_provenance_header(const Provenance& prov) {
  return "# seed: " + std::to_string(prov.seed) + "\n# spec_hash: " + prov.spec_hash() + "\n# spec: " + prov.spec_json + "\n";
}

inline std::string format_trajectory_csv(const PreparationResult& r, const Provenance& prov) {
  std::string out = csv_provenance_header(prov);
  out += "iteration,truth_before_atoms,estimate_atoms,estimate_uncertainty_atoms,truth_after_measurement_atoms,cut_fraction,"
         "post_cut_truth_atoms,stage\n";
  for (std::size_t k = 0; k < r.trajectory.size(); ++k) {
    const auto& s = r.trajectory[k];
    out += std::to_string(k + 1) + "," + format_double(s.truth_before) + "," + format_double(s.estimate) + "," +
           format_double(s.estimate_uncertainty) + "," + format_double(s.truth_after_measurement) + "," +
           format_double(s.cut_fraction) + "," + format_double(s.post_cut_truth) + "," + std::string(to_string(s.stage)) + "\n";
  }
  return out;
}

// Estimate with the fitted curve on the same time axis.
inline std::string format_trace_csv(const MeasurementRecord& r, const Provenance& prov) {
  std::string out = csv_provenance_header(prov);
  out += "time_s,estimate_atoms,fit_atoms\n";
  const SampleStream& s = r.atom_number_estimate;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double t = s.time_at(k);
    out += format_double(t) + "," + format_double(s.values[k]) + "," + format_double(r.model(t)) + "\n";
  }
  return out;
}

struct SweepPoint {
  double value = 0.0;
  int runs = 0;
  double mean_angle_variance = 0.0;     // rad^2
  double angle_variance_sem = 0.0;      // rad^2
  double mean_variance = 0.0;           // atoms^2
  double mean_predicted_shot_variance = 0.0;
  double mean_gamma = 0.0;              // 1/s
  double gamma_sem = 0.0;
  double mean_gamma_uncertainty = 0.0;
  double mean_n0 = 0.0;                 // atoms
  double mean_residual_rms = 0.0;       // atoms
};

inline std::string format_sweep_summary(const std::string& parameter, const std::vector<SweepPoint>& points,
                                        const Provenance& prov) {
  std::string out = csv_provenance_header(prov);
  out += "# parameter: " + parameter + "\n";
  out += "value,runs,angle_variance_rad2,angle_variance_sem_rad2,variance_atoms2,predicted_shot_variance_atoms2,gamma_per_s,"
         "gamma_sem_per_s,gamma_uncertainty_per_s,n0_atoms,residual_rms_atoms\n";
  for (const auto& p : points)
    out += format_double(p.value) + "," + std::to_string(p.runs) + "," + format_double(p.mean_angle_variance) + "," +
           format_double(p.angle_variance_sem) + "," + format_double(p.mean_variance) + "," +
           format_double(p.mean_predicted_shot_variance) + "," + format_double(p.mean_gamma) + "," + format_double(p.gamma_sem) +
           "," + format_double(p.mean_gamma_uncertainty) + "," + format_double(p.mean_n0) + "," +
           format_double(p.mean_residual_rms) + "\n";
  return out;
}

}  // namespace faraday::io
