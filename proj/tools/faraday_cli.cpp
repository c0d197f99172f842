#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "faraday/faraday.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_flags(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "Configuration document (JSON)")->required();
  cmd.add_option("--seed", f.seed, "Override run.seed");
  cmd.add_option("--out", f.out, "Output directory (default: FARADAY_OUTPUT_DIR, then output_dir)");
  cmd.add_option("--override", f.overrides, "key=value applied to the resolved configuration (repeatable)");
  cmd.add_flag("--quiet", f.quiet, "Suppress progress output");
}

int run(const std::string& command, const Flags& f) {
  using namespace faraday::io;
  json doc = parse_document(read_text(f.config));
  if (!doc.is_object()) throw faraday::ConfigError("<document>: expected a JSON object with sections");
  doc["command"] = command;
  doc = apply_overrides(std::move(doc), f.overrides);
  ExperimentSpec spec = parse_config_json(doc, false);
  if (f.seed) spec.run.seed = *f.seed;
  validate(spec);

  RunOptions options;
  if (!f.out.empty()) {
    options.output_dir = f.out;
  } else if (const char* env = std::getenv("FARADAY_OUTPUT_DIR"); env && *env) {
    options.output_dir = env;
  } else {
    options.output_dir = spec.output_dir;
  }
  if (!f.quiet) options.log = &std::cerr;
  const ExperimentOutcome outcome = run_experiment(spec, options);
  if (!f.quiet) std::cout << outcome.summary << "\n";
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Faraday atom-number measurement simulator"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Synthesize detector streams and the true atom number"},
      {"demodulate", "Lock-in demodulation of a recorded stream"},
      {"estimate", "Atom-number trace, decay fit and noise attribution"},
      {"prepare", "Closed-loop preparation of a target atom number"},
      {"sweep", "Repeat simulate and estimate over a parameter grid"}};
  for (const auto& [name, help] : commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_flags(*cmd, flags);
    cmd->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : faraday::io::exit_code::config;
  }
  try {
    return run(chosen, flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return faraday::io::exit_code_for(e);
  }
}
