#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "faraday/error.hpp"
#include "faraday/sample_stream.hpp"

namespace faraday::io {

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size())
    throw IoError(context + ": '" + std::string(text) + "' is not a number");
  return v;
}

constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  for (int k = 15; k >= 0; --k, v >>= 4) buf[k] = "0123456789abcdef"[v & 0xF];
  return std::string(buf, 16);
}

// What produced a file: the resolved spec as single-line JSON and the seed.
struct Provenance {
  std::string spec_json;
  std::uint64_t seed = 0;

  std::string spec_hash() const { return "fnv1a64:" + hex64(fnv1a64(spec_json)); }
};

inline void ensure_parent(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  f.close();
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Header lines start with '#', then a "value" column header and one value
// per row.
inline std::string format_stream(const SampleStream& s, const Provenance& prov) {
  std::string out;
  out.reserve(s.values.size() * 24 + 512);
  out += "# channel: " + std::string(to_string(s.channel)) + "\n";
  out += "# units: " + std::string(units_of(s.channel)) + "\n";
  out += "# sample_rate_hz: " + format_double(s.sample_rate) + "\n";
  out += "# start_time_s: " + format_double(s.start_time) + "\n";
  out += "# samples: " + std::to_string(s.values.size()) + "\n";
  out += "# seed: " + std::to_string(prov.seed) + "\n";
  out += "# spec_hash: " + prov.spec_hash() + "\n";
  out += "# spec: " + prov.spec_json + "\n";
  for (const auto& [k, v] : s.metadata) out += "# meta." + k + ": " + format_double(v) + "\n";
  out += "value\n";
  for (const double v : s.values) {
    out += format_double(v);
    out += '\n';
  }
  return out;
}

inline void write_stream(const std::filesystem::path& path, const SampleStream& s, const Provenance& prov) {
  write_text(path, format_stream(s, prov));
}

struct StreamFile {
  SampleStream stream;
  Provenance provenance;
  std::string spec_hash;
};

inline StreamFile parse_stream(std::string_view text, const std::string& name = "stream") {
  StreamFile out;
  bool have_channel = false, have_rate = false, have_start = false, have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string where = name + ":" + std::to_string(line_no);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (have_header) throw IoError(where + ": header line after the data column header");
      line.remove_prefix(1);
      const auto colon = line.find(':');
      if (colon == std::string_view::npos) continue;
      std::string_view key = line.substr(0, colon);
      std::string_view value = line.substr(colon + 1);
      while (!key.empty() && key.front() == ' ') key.remove_prefix(1);
      while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
      if (key == "channel") {
        try {
          out.stream.channel = channel_from_string(value);
        } catch (const ContractError& e) {
          throw IoError(where + ": " + e.what());
        }
        have_channel = true;
      } else if (key == "sample_rate_hz") {
        out.stream.sample_rate = parse_double(value, where);
        have_rate = true;
      } else if (key == "start_time_s") {
        out.stream.start_time = parse_double(value, where);
        have_start = true;
      } else if (key == "seed") {
        const auto r = std::from_chars(value.data(), value.data() + value.size(), out.provenance.seed);
        if (r.ec != std::errc{}) throw IoError(where + ": bad seed");
      } else if (key == "spec_hash") {
        out.spec_hash = std::string(value);
      } else if (key == "spec") {
        out.provenance.spec_json = std::string(value);
      } else if (key.starts_with("meta.")) {
        out.stream.metadata[std::string(key.substr(5))] = parse_double(value, where);
      }
      continue;
    }
    if (!have_header) {
      if (line != "value") throw IoError(where + ": expected the 'value' column header");
      have_header = true;
      continue;
    }
    out.stream.values.push_back(parse_double(line, where));
  }
  if (!have_channel || !have_rate || !have_start || !have_header)
    throw IoError(name + ": missing header (need channel, sample_rate_hz, start_time_s and a 'value' column)");
  if (!(out.stream.sample_rate > 0.0)) throw IoError(name + ": sample_rate_hz must be > 0");
  return out;
}

inline StreamFile read_stream(const std::filesystem::path& path) { return parse_stream(read_text(path), path.string()); }

}  // namespace faraday::io
