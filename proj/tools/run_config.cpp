#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "xmlc/errors.hpp"
#include "xmlc/util.hpp"

extern char** environ;

namespace xmlc::cli {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Synthetic: return "synthetic";
    case Stage::Preprocess: return "preprocess";
    case Stage::Graph: return "graph";
    case Stage::Mask: return "mask";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Predict: return "predict";
    case Stage::Ablate: return "ablate";
  }
  return "?";
}

const char* producer(Stage s) {
  switch (s) {
    case Stage::Synthetic: return "gen-synthetic";
    case Stage::Preprocess: return "preprocess";
    case Stage::Graph: return "build-graph";
    case Stage::Mask: return "build-mask";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Predict: return "predict";
    case Stage::Ablate: return "ablate";
  }
  return "?";
}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs{
      {"work_dir", "run", Group::Path, "directory for artifacts and manifests"},
      {"train_file", "", Group::Path, "training corpus (JSON Lines)"},
      {"val_file", "", Group::Path, "validation corpus; empty disables early stopping"},
      {"test_file", "", Group::Path, "test corpus"},
      {"catalog_file", "", Group::Path, "label catalog TSV: code<TAB>descriptor"},
      {"predict_file", "", Group::Path, "documents to score with `predict`; defaults to test_file"},
      {"synth_dir", "", Group::Path, "output of `gen-synthetic`; defaults to <work_dir>/synthetic"},
      {"seed", "1", Group::Seed, "seed for every stochastic stage"},
      {"min_count", "3", Group::Data, "vocabulary frequency floor"},
      {"max_len", "4000", Group::Data, "tokens kept per document"},
      {"embedding_dim", "100", Group::Data, "word and label vector size d"},
      {"skipgram_epochs", "5", Group::Data, "skip-gram passes over the training split"},
      {"skipgram_window", "5", Group::Data, "skip-gram context window"},
      {"skipgram_negatives", "5", Group::Data, "negative samples per context pair"},
      {"embedding_file", "", Group::Data, "external vectors for swap_embeddings"},
      {"variant", "full", Group::Data, "full, no_mask, no_label_feature or swap_embeddings"},
      {"lambda", "1.0", Group::Graph, "co-occurrence edge threshold on P(j|i)"},
      {"tau", "0.005", Group::Mask, "candidate threshold on P(label|code)"},
      {"filter_size", "9", Group::Model, "convolution width K (odd)"},
      {"dilation_rates", "1,2,4", Group::Model, "dilation rates of the stacked convolutions"},
      {"num_blocks", "1", Group::Model, "stacked dilated residual blocks"},
      {"dropout", "0.2", Group::Model, "dropout on the embeddings and on each block output"},
      {"activation", "relu", Group::Model, "relu or tanh"},
      {"gcn_norm", "self_loop_row_norm", Group::Model, "self_loop_row_norm or raw"},
      {"hard_gate", "true", Group::Model, "zero scores outside the candidate set"},
      {"lr", "0.0001", Group::Model, "Adam learning rate"},
      {"lr_decay", "0.9", Group::Model, "learning-rate factor per epoch"},
      {"clip_norm", "5", Group::Model, "global gradient-norm clip"},
      {"batch_size", "32", Group::Model, "documents per update"},
      {"max_epochs", "50", Group::Model, "epoch budget"},
      {"patience", "5", Group::Model, "epochs without validation gain before stopping"},
      {"threshold", "0.0005", Group::Model, "probability at which a label is predicted"},
      {"ks", "5,8,15", Group::Eval, "cut-offs for precision@K"},
      {"eval_split", "test", Group::Eval, "split scored by `evaluate`: val or test"},
      {"predict_k", "8", Group::Eval, "ranked labels written per document by `predict`"},
      {"ablation_variants", "full,no_mask,no_label_feature", Group::Ablate, "variants compared by `ablate`"},
      {"ablation_seeds", "1,2,3,4,5", Group::Ablate, "seeds for `ablate`"},
      {"synth_labels", "200", Group::Synth, "labels in the generated corpus"},
      {"synth_docs", "5000", Group::Synth, "documents in the generated corpus"},
  };
  return specs;
}

namespace {

const KeySpec* find_spec(std::string_view key) {
  for (const auto& s : key_specs())
    if (s.name == key) return &s;
  return nullptr;
}

std::vector<Group> groups_of(Stage s) {
  using G = Group;
  switch (s) {
    case Stage::Synthetic: return {G::Seed, G::Synth};
    case Stage::Preprocess: return {G::Seed, G::Data};
    case Stage::Graph: return {G::Seed, G::Data, G::Graph};
    case Stage::Mask: return {G::Seed, G::Data, G::Mask};
    case Stage::Train: return {G::Seed, G::Data, G::Graph, G::Mask, G::Model};
    case Stage::Evaluate:
    case Stage::Predict: return {G::Seed, G::Data, G::Graph, G::Mask, G::Model, G::Eval};
    case Stage::Ablate: return {G::Seed, G::Data, G::Graph, G::Mask, G::Model, G::Eval, G::Ablate};
  }
  return {};
}

std::size_t as_size(std::uint64_t v) { return static_cast<std::size_t>(v); }

}  // namespace

RunConfig::RunConfig() {
  for (const auto& s : key_specs()) values_[std::string(s.name)] = std::string(s.default_value);
}

void RunConfig::set(const std::string& key, const std::string& value, const std::string& origin) {
  if (!find_spec(key)) throw ConfigError("unknown configuration key '" + key + "' (" + origin + ")");
  values_[key] = trim(value);
}

void RunConfig::merge_text(std::string_view text, const std::string& origin) {
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    set(trim(line.substr(0, eq)), line.substr(eq + 1), origin + ":" + std::to_string(line_no));
  }
}

void RunConfig::merge_file(const std::string& path) {
  if (!file_exists(path)) throw ConfigError("config file not found: " + path);
  merge_text(read_file(path), path);
}

void RunConfig::merge_environment(const std::map<std::string, std::string>& env) {
  for (const auto& [name, value] : env) {
    if (name.rfind("XMLC_", 0) != 0) continue;
    std::string key = name.substr(5);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    set(key, value, "environment variable " + name);
  }
}

void RunConfig::merge_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view kv(*e);
    const auto eq = kv.find('=');
    if (eq != std::string_view::npos) env.emplace(kv.substr(0, eq), kv.substr(eq + 1));
  }
  merge_environment(env);
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

std::uint64_t RunConfig::count(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  if (trim(get(key)).empty()) return out;
  for (const auto& item : split(get(key), ',')) {
    const std::string t = trim(item);
    if (t.empty()) throw ConfigError(key + ": empty item in '" + get(key) + "'");
    out.push_back(t);
  }
  return out;
}

std::vector<int> RunConfig::ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : list(key)) {
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size())
      throw ConfigError(key + ": expected comma-separated integers, got '" + get(key) + "'");
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& s : key_specs()) out += std::string(s.name) + "=" + get(std::string(s.name)) + "\n";
  return out;
}

std::string RunConfig::stage_hash(Stage stage) const {
  const auto groups = groups_of(stage);
  std::string text;
  for (const auto& s : key_specs())
    if (std::find(groups.begin(), groups.end(), s.group) != groups.end())
      text += std::string(s.name) + "=" + get(std::string(s.name)) + "\n";
  return hex64(fnv1a(text));
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.dim = as_size(count("embedding_dim"));
  if (e.dim == 0) throw ConfigError("embedding_dim must be positive");
  e.encoder.kernel = static_cast<int>(count("filter_size"));
  e.encoder.rates = ints("dilation_rates");
  e.encoder.num_blocks = static_cast<int>(count("num_blocks"));
  e.encoder.dropout = real("dropout");
  e.encoder.activation = parse_activation(get("activation"));
  e.encoder.validate();
  e.norm = parse_norm_mode(get("gcn_norm"));
  try {
    e.variant = parse_variant(get("variant"));
  } catch (const ArgumentError& err) {
    throw ConfigError(std::string("variant: ") + err.what());
  }
  e.hard_gate = flag("hard_gate");
  e.lambda = real("lambda");
  if (!(e.lambda > 0.0 && e.lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
  e.tau = real("tau");
  if (!(e.tau >= 0.0 && e.tau < 1.0)) throw ConfigError("tau must lie in [0, 1)");
  e.skipgram_epochs = as_size(count("skipgram_epochs"));
  e.skipgram_window = as_size(count("skipgram_window"));
  e.skipgram_negatives = as_size(count("skipgram_negatives"));
  e.embedding_file = get("embedding_file");
  e.train.lr = real("lr");
  e.train.lr_decay = real("lr_decay");
  e.train.clip_norm = real("clip_norm");
  e.train.batch_size = as_size(count("batch_size"));
  e.train.max_epochs = as_size(count("max_epochs"));
  e.train.patience = as_size(count("patience"));
  e.train.seed = count("seed");
  e.train.prediction_threshold = real("threshold");
  e.train.validate();
  e.ks = ints("ks");
  if (e.ks.empty()) throw ConfigError("ks must list at least one cut-off");
  for (int k : e.ks)
    if (k <= 0) throw ConfigError("ks entries must be positive");
  return e;
}

GeneratorSpec RunConfig::generator() const {
  try {
    return planted_spec(as_size(count("synth_labels")), as_size(count("synth_docs")), count("seed"));
  } catch (const SpecError& e) {
    throw ConfigError(std::string("synthetic corpus: ") + e.what());
  }
}

void RunConfig::validate() const {
  experiment();
  if (count("min_count") == 0) throw ConfigError("min_count must be at least 1");
  if (count("max_len") == 0) throw ConfigError("max_len must be positive");
  const std::string& split = get("eval_split");
  if (split != "val" && split != "test") throw ConfigError("eval_split must be val or test, got '" + split + "'");
  if (count("predict_k") == 0) throw ConfigError("predict_k must be positive");
  const auto variants = list("ablation_variants");
  if (variants.empty()) throw ConfigError("ablation_variants is empty");
  for (const auto& v : variants) {
    try {
      parse_variant(v);
    } catch (const ArgumentError& err) {
      throw ConfigError(std::string("ablation_variants: ") + err.what());
    }
  }
  if (list("ablation_seeds").empty()) throw ConfigError("ablation_seeds is empty");
  for (const auto& s : list("ablation_seeds")) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError("ablation_seeds: '" + s + "' is not a seed");
  }
  if (get("work_dir").empty()) throw ConfigError("work_dir must not be empty");
}

std::string RunConfig::work_path(const std::string& file) const { return get("work_dir") + "/" + file; }

std::string describe_keys() {
  std::ostringstream os;
  os << "Configuration keys (key=value; XMLC_<KEY> in the environment overrides files):\n";
  for (const auto& s : key_specs())
    os << "  " << s.name << " = " << (s.default_value.empty() ? "\"\"" : s.default_value) << "\n      "
       << s.help << "\n";
  return os.str();
}

}  // namespace xmlc::cli
