#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faraday/error.hpp"

namespace faraday {

enum class Channel {
  polarimeter_diff,
  power_monitor,
  demod_i,
  demod_q,
  demod_magnitude,
  demod_phase,
  rotation_angle,
  atom_number_estimate,
  atom_number_truth,
  atom_number_envelope,
};

inline std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::polarimeter_diff: return "polarimeter_diff";
    case Channel::power_monitor: return "power_monitor";
    case Channel::demod_i: return "demod_i";
    case Channel::demod_q: return "demod_q";
    case Channel::demod_magnitude: return "demod_magnitude";
    case Channel::demod_phase: return "demod_phase";
    case Channel::rotation_angle: return "rotation_angle";
    case Channel::atom_number_estimate: return "atom_number_estimate";
    case Channel::atom_number_truth: return "atom_number_truth";
    case Channel::atom_number_envelope: return "atom_number_envelope";
  }
  return "unknown";
}

inline Channel channel_from_string(std::string_view s) {
  for (Channel c : {Channel::polarimeter_diff, Channel::power_monitor, Channel::demod_i, Channel::demod_q,
                    Channel::demod_magnitude, Channel::demod_phase, Channel::rotation_angle,
                    Channel::atom_number_estimate, Channel::atom_number_truth, Channel::atom_number_envelope})
    if (to_string(c) == s) return c;
  throw ContractError("unknown channel label '" + std::string(s) + "'");
}

inline std::string_view units_of(Channel c) {
  switch (c) {
    case Channel::polarimeter_diff:
    case Channel::power_monitor: return "photons/s";
    case Channel::demod_i:
    case Channel::demod_q:
    case Channel::demod_magnitude: return "input units";
    case Channel::demod_phase:
    case Channel::rotation_angle: return "rad";
    case Channel::atom_number_estimate:
    case Channel::atom_number_truth:
    case Channel::atom_number_envelope: return "atoms";
  }
  return "";
}

// Uniformly sampled series: sample k sits at start_time + k / sample_rate.
struct SampleStream {
  double sample_rate = 1.0;  // Hz
  double start_time = 0.0;   // s
  Channel channel = Channel::polarimeter_diff;
  std::vector<double> values;
  // Free-form numeric annotations, e.g. the offset subtracted by remove_offset.
  std::map<std::string, double> metadata;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  double dt() const { return 1.0 / sample_rate; }
  double time_at(std::size_t k) const { return start_time + static_cast<double>(k) / sample_rate; }
  double end_time() const { return time_at(values.size()); }
  std::span<const double> view() const { return values; }

  // Index of the first sample at or after t, clamped to [0, size()].
  std::size_t index_at_or_after(double t) const {
    const double k = std::ceil((t - start_time) * sample_rate - 1e-9);
    if (k <= 0.0) return 0;
    return std::min(values.size(), static_cast<std::size_t>(k));
  }

  void validate() const {
    detail::require<ContractError>(sample_rate > 0.0 && std::isfinite(sample_rate),
                                   "stream sample_rate must be > 0 Hz");
    detail::require<ContractError>(!values.empty(), "stream '" + std::string(to_string(channel)) + "' is empty");
  }
};

// Samples with time in [t_begin, t_end).
inline SampleStream slice(const SampleStream& s, double t_begin, double t_end) {
  const std::size_t b = s.index_at_or_after(t_begin);
  const std::size_t e = std::max(b, s.index_at_or_after(t_end));
  SampleStream out{s.sample_rate, s.time_at(b), s.channel, {}, s.metadata};
  out.values.assign(s.values.begin() + static_cast<std::ptrdiff_t>(b), s.values.begin() + static_cast<std::ptrdiff_t>(e));
  return out;
}

inline void require_aligned(const SampleStream& a, const SampleStream& b, std::string_view what) {
  if (a.size() != b.size() || a.sample_rate != b.sample_rate)
    throw ContractError(std::string(what) + ": streams differ in length or sample rate (" + std::to_string(a.size()) +
                        " @ " + std::to_string(a.sample_rate) + " Hz vs " + std::to_string(b.size()) + " @ " +
                        std::to_string(b.sample_rate) + " Hz)");
}

}  // namespace faraday
