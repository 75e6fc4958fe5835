#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xmlc/pipeline.hpp"

namespace xmlc::cli {

// Which artifacts a key influences. Artifact hashes cover the groups of their
// own stage plus everything upstream, so editing a training knob does not make
// the vocabulary stale while editing min_count invalidates everything.
enum class Group { Path, Seed, Data, Graph, Mask, Model, Eval, Ablate, Synth };

enum class Stage { Synthetic, Preprocess, Graph, Mask, Train, Evaluate, Predict, Ablate };
const char* to_string(Stage s);
// The subcommand that produces a stage's artifacts.
const char* producer(Stage s);

struct KeySpec {
  std::string_view name;
  std::string_view default_value;
  Group group;
  std::string_view help;
};

const std::vector<KeySpec>& key_specs();

// Flat key=value configuration. Layers apply in order: defaults, config
// files, XMLC_<KEY> environment variables, then explicit overrides. Every
// layer rejects keys that are not in key_specs().
class RunConfig {
 public:
  RunConfig();

  void merge_text(std::string_view text, const std::string& origin);
  void merge_file(const std::string& path);
  void merge_environment();  // reads the process environment
  void merge_environment(const std::map<std::string, std::string>& env);
  void set(const std::string& key, const std::string& value, const std::string& origin = "override");

  const std::string& get(const std::string& key) const;
  std::string str(const std::string& key) const { return get(key); }
  double real(const std::string& key) const;
  std::uint64_t count(const std::string& key) const;  // non-negative integer
  bool flag(const std::string& key) const;
  std::vector<int> ints(const std::string& key) const;  // comma separated
  std::vector<std::string> list(const std::string& key) const;

  // Every key in registry order, "key=value" per line.
  std::string canonical() const;
  // Hash over the keys that can influence the given stage's artifacts.
  std::string stage_hash(Stage s) const;

  // Parses every typed key once; throws ConfigError on the first bad value.
  void validate() const;
  ExperimentConfig experiment() const;
  GeneratorSpec generator() const;

  std::string work_path(const std::string& file) const;

 private:
  std::map<std::string, std::string> values_;
};

// Documentation block listing every key with its default.
std::string describe_keys();

}  // namespace xmlc::cli
