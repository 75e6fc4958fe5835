#pragma once

#include <map>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace xmlc::cli {

// Written next to every artifact set as <work_dir>/manifests/<subcommand>.json.
struct Manifest {
  std::string subcommand;
  std::string config_hash;  // RunConfig::stage_hash of the producing stage
  std::string config;       // canonical config text, enough to replay the run
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash

  std::string to_json() const;
  static Manifest from_json(const std::string& text, const std::string& origin);
};

std::string content_hash(std::string_view bytes);
std::string manifest_path(const RunConfig& cfg, const std::string& subcommand);

// Subcommands in pipeline order (plus ablate and gen-synthetic).
const std::vector<std::string>& subcommands();
std::string describe_subcommand(const std::string& name);

// Runs one subcommand and returns the manifest it wrote.
Manifest run_subcommand(const std::string& name, const RunConfig& cfg, bool verbose);

// Re-runs the subcommand recorded in a manifest under its recorded config and
// lists outputs whose bytes differ from the recorded hashes.
std::vector<std::string> replay(const std::string& manifest_file, bool verbose);

}  // namespace xmlc::cli
