#include "commands.hpp"

#include <algorithm>
#include <iostream>

#include "json.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/pipeline.hpp"
#include "xmlc/util.hpp"

namespace xmlc::cli {

std::string content_hash(std::string_view bytes) { return hex64(fnv1a(bytes)); }

std::string manifest_path(const RunConfig& cfg, const std::string& subcommand) {
  return cfg.work_path("manifests/" + subcommand + ".json");
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["config_hash"] = config_hash;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(const std::string& text, const std::string& origin) {
  try {
    const auto j = nlohmann::json::parse(text);
    Manifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.at("config").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest " + origin + ": " + e.what());
  }
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"gen-synthetic", "preprocess", "build-graph", "build-mask",
                                              "train",         "evaluate",   "predict",     "ablate"};
  return names;
}

std::string describe_subcommand(const std::string& name) {
  if (name == "gen-synthetic") return "write a planted synthetic corpus, catalog and ground truth";
  if (name == "preprocess") return "build the vocabulary, encode the splits, pre-train word vectors";
  if (name == "build-graph") return "build the label co-occurrence graph from the training split";
  if (name == "build-mask") return "build the auxiliary-code candidate index from the training split";
  if (name == "train") return "train the model; writes checkpoint.bin and history.csv";
  if (name == "evaluate") return "score eval_split; writes metrics.json and metrics.tsv";
  if (name == "predict") return "rank labels for predict_file; writes predictions.jsonl";
  if (name == "ablate") return "train every ablation variant on every ablation seed";
  throw ConfigError("unknown subcommand '" + name + "'");
}

namespace {

Stage stage_of(const std::string& name) {
  if (name == "gen-synthetic") return Stage::Synthetic;
  if (name == "preprocess") return Stage::Preprocess;
  if (name == "build-graph") return Stage::Graph;
  if (name == "build-mask") return Stage::Mask;
  if (name == "train") return Stage::Train;
  if (name == "evaluate") return Stage::Evaluate;
  if (name == "predict") return Stage::Predict;
  if (name == "ablate") return Stage::Ablate;
  throw ConfigError("unknown subcommand '" + name + "'");
}

// Tracks what one subcommand reads and writes, and refuses stale inputs.
class Run {
 public:
  Run(const RunConfig& cfg, const std::string& name, bool verbose) : cfg_(cfg), verbose_(verbose) {
    cfg.validate();
    manifest_.subcommand = name;
    manifest_.config_hash = cfg.stage_hash(stage_of(name));
    manifest_.config = cfg.canonical();
  }

  const RunConfig& cfg() const { return cfg_; }
  bool verbose() const { return verbose_; }

  // A user-supplied file named by a config key.
  std::string input(const std::string& key) {
    const std::string& path = cfg_.get(key);
    if (path.empty()) throw ConfigError(key + " is not set");
    if (!file_exists(path)) throw InputError(key + " points to a missing file: " + path);
    return record(path);
  }

  // An artifact in work_dir written by an earlier subcommand.
  std::string artifact(Stage from, const std::string& file) {
    const std::string path = cfg_.work_path(file);
    const std::string sub = producer(from);
    const std::string mpath = manifest_path(cfg_, sub);
    if (!file_exists(path) || !file_exists(mpath))
      throw InputError("missing artifact " + path + "; run `xmlc " + sub + "` first");
    const Manifest m = Manifest::from_json(read_file(mpath), mpath);
    const std::string expected = cfg_.stage_hash(from);
    if (m.config_hash != expected)
      throw StalenessError(path + " was built under a different configuration (config hash " + m.config_hash +
                           ", current " + expected + "); rerun `xmlc " + sub + "`");
    for (const auto& [in, hash] : m.inputs) {
      if (!file_exists(in) || content_hash(read_file(in)) != hash)
        throw StalenessError("input " + in + " changed after `xmlc " + sub + "` read it; rerun `xmlc " + sub + "`");
    }
    std::string bytes = read_file(path);
    const auto it = m.outputs.find(path);
    if (it == m.outputs.end() || it->second != content_hash(bytes))
      throw StalenessError(path + " does not match the manifest of `xmlc " + sub + "`; rerun `xmlc " + sub + "`");
    manifest_.inputs[path] = it->second;
    return bytes;
  }

  void output(const std::string& path, std::string_view bytes) {
    write_file(path, bytes);
    manifest_.outputs[path] = content_hash(bytes);
    log("wrote " + path);
  }
  void work_output(const std::string& file, std::string_view bytes) { output(cfg_.work_path(file), bytes); }

  void log(const std::string& msg) const { std::cerr << "xmlc " << manifest_.subcommand << ": " << msg << "\n"; }

  Manifest finish() {
    write_file(manifest_path(cfg_, manifest_.subcommand), manifest_.to_json());
    return manifest_;
  }

 private:
  std::string record(const std::string& path) {
    std::string bytes = read_file(path);
    manifest_.inputs[path] = content_hash(bytes);
    return bytes;
  }

  const RunConfig& cfg_;
  bool verbose_;
  Manifest manifest_;
};

std::vector<RawDocument> optional_corpus(Run& run, const std::string& key) {
  if (run.cfg().get(key).empty()) return {};
  return parse_corpus_jsonl(run.input(key));
}

PreparedData load_prepared(Run& run) {
  PreparedData d;
  d.vocab = Vocabulary::parse(run.artifact(Stage::Preprocess, "vocab.txt"));
  d.catalog = LabelCatalog::parse(run.artifact(Stage::Preprocess, "catalog.tsv"));
  d.train = parse_encoded(run.artifact(Stage::Preprocess, "train.enc.jsonl"), Split::Train);
  d.val = parse_encoded(run.artifact(Stage::Preprocess, "val.enc.jsonl"), Split::Validation);
  d.test = parse_encoded(run.artifact(Stage::Preprocess, "test.enc.jsonl"), Split::Test);
  return d;
}

CooccurrenceGraph load_graph(Run& run) {
  auto g = parse_graph(run.artifact(Stage::Graph, "graph.txt"));
  if (g.config_hash != run.cfg().stage_hash(Stage::Graph))
    throw StalenessError("graph.txt carries config hash " + g.config_hash + "; rerun `xmlc build-graph`");
  return g;
}

AuxMaskIndex load_mask(Run& run, double tau) {
  auto index = parse_mask_index(run.artifact(Stage::Mask, "mask.txt"), tau);
  if (index.config_hash != run.cfg().stage_hash(Stage::Mask))
    throw StalenessError("mask.txt carries config hash " + index.config_hash + "; rerun `xmlc build-mask`");
  return index;
}

Model load_model(Run& run, const PreparedData& d, const CooccurrenceGraph& g) {
  LoadedCheckpoint ck = parse_checkpoint(run.artifact(Stage::Train, "checkpoint.bin"));
  if (ck.meta.config_hash != run.cfg().stage_hash(Stage::Train))
    throw StalenessError("checkpoint.bin carries config hash " + ck.meta.config_hash + "; rerun `xmlc train`");
  if (ck.meta.vocab_hash != d.vocab.hash())
    throw StalenessError("checkpoint.bin was trained on a different vocabulary; rerun `xmlc train`");
  const ModelConfig& mc = ck.model_config;
  if (g.num_labels != mc.num_labels || d.catalog.size() != mc.num_labels)
    throw StalenessError("checkpoint.bin has " + std::to_string(mc.num_labels) +
                         " labels but the graph and catalog disagree; rerun `xmlc train`");
  Model m(mc, propagation_matrix(g.adjacency, mc.norm), d.catalog.descriptor_ids(d.vocab),
          Tensor(Shape{mc.vocab_size, mc.dim}));
  restore_parameters(m, ck.params);
  return m;
}

void gen_synthetic(Run& run) {
  const RunConfig& cfg = run.cfg();
  const GeneratorSpec spec = cfg.generator();
  const SyntheticCorpus corpus = generate(spec);
  const AuditReport audit = verify(corpus.docs, corpus.truth);
  if (!audit.passed()) {
    std::string msg = "generated corpus failed its audit:";
    for (const auto& i : audit.issues) msg += " " + i + ";";
    msg += " " + std::to_string(audit.flagged_docs.size()) + " documents flagged";
    throw SpecError(msg);
  }
  const std::string dir = cfg.get("synth_dir").empty() ? cfg.work_path("synthetic") : cfg.get("synth_dir");
  const std::vector<std::pair<std::string, Split>> splits{
      {"train", Split::Train}, {"val", Split::Validation}, {"test", Split::Test}};
  std::string conf;
  for (const auto& [name, s] : splits) {
    const std::string path = dir + "/" + name + ".jsonl";
    run.output(path, serialize_corpus_jsonl(corpus.split(s)));
    conf += name + "_file=" + path + "\n";
  }
  run.output(dir + "/catalog.tsv", corpus.catalog_tsv);
  conf += "catalog_file=" + dir + "/catalog.tsv\n";
  run.output(dir + "/truth.json", corpus.truth.to_json());
  run.output(dir + "/corpus.conf", conf);
  run.log(std::to_string(corpus.docs.size()) + " documents, " + std::to_string(spec.num_labels) +
          " labels, " + std::to_string(corpus.truth.rejected) + " rejected by the co-occurrence pass");
}

void preprocess(Run& run) {
  const RunConfig& cfg = run.cfg();
  const ExperimentConfig exp = cfg.experiment();
  const auto train_raw = parse_corpus_jsonl(run.input("train_file"));
  const auto val_raw = optional_corpus(run, "val_file");
  const auto test_raw = optional_corpus(run, "test_file");
  LabelCatalog catalog = LabelCatalog::parse(run.input("catalog_file"));
  if (!cfg.get("embedding_file").empty()) run.input("embedding_file");
  const PreparedData d = prepare_data(train_raw, val_raw, test_raw, std::move(catalog), cfg.count("min_count"),
                                      static_cast<std::size_t>(cfg.count("max_len")));
  const EmbeddingTable emb = initial_embeddings(d, exp);
  run.work_output("vocab.txt", d.vocab.serialize());
  run.work_output("catalog.tsv", d.catalog.serialize());
  run.work_output("train.enc.jsonl", serialize_encoded(d.train));
  run.work_output("val.enc.jsonl", serialize_encoded(d.val));
  run.work_output("test.enc.jsonl", serialize_encoded(d.test));
  run.work_output("embeddings.txt", serialize_embeddings(emb, d.vocab));
  run.log("vocabulary " + std::to_string(d.vocab.size()) + ", splits " + std::to_string(d.train.size()) + "/" +
          std::to_string(d.val.size()) + "/" + std::to_string(d.test.size()));
}

void build_graph(Run& run) {
  const PreparedData d = load_prepared(run);
  auto g = build_cooccurrence(d.train, d.catalog.size(), run.cfg().experiment().lambda);
  g.config_hash = run.cfg().stage_hash(Stage::Graph);
  run.work_output("graph.txt", serialize_graph(g));
  run.log(std::to_string(g.pair_count()) + " label pairs above the diagonal");
}

void build_mask(Run& run) {
  const PreparedData d = load_prepared(run);
  const double tau = run.cfg().experiment().tau;
  auto index = build_mask_index(d.train, d.catalog.size(), tau);
  index.config_hash = run.cfg().stage_hash(Stage::Mask);
  run.work_output("mask.txt", serialize_mask_index(index));
  if (!d.val.empty()) {
    const MaskStats s = mask_stats(index, d.val);
    run.log("validation recall " + format_double(s.recall) + ", mean mask fraction " +
            format_double(s.mask_fraction));
  }
}

void train_cmd(Run& run) {
  ExperimentConfig exp = run.cfg().experiment();
  exp.train.verbose = run.verbose();
  const PreparedData d = load_prepared(run);
  const auto g = load_graph(run);
  const auto index = load_mask(run, exp.tau);
  const EmbeddingTable emb{parse_embeddings(run.artifact(Stage::Preprocess, "embeddings.txt"), d.vocab, exp.dim,
                                            exp.train.seed)};
  Model model = build_model(d, g, emb, exp);
  TrainResult r = train(model, d.train, d.val, index, exp.train);
  CheckpointMeta meta;
  meta.config_hash = run.cfg().stage_hash(Stage::Train);
  meta.vocab_hash = d.vocab.hash();
  meta.epoch = r.best_epoch;
  run.work_output("checkpoint.bin", serialize_checkpoint(model, r.optimizer, meta));
  run.work_output("history.csv", history_csv(r.history));
  run.log("best epoch " + std::to_string(r.best_epoch) + ", validation micro-F1 " +
          format_double(r.best_val_micro_f1));
}

void evaluate_cmd(Run& run) {
  const ExperimentConfig exp = run.cfg().experiment();
  const PreparedData d = load_prepared(run);
  const auto g = load_graph(run);
  const auto index = load_mask(run, exp.tau);
  Model model = load_model(run, d, g);
  const bool on_val = run.cfg().get("eval_split") == "val";
  const auto& docs = on_val ? d.val : d.test;
  if (docs.empty()) throw InputError(std::string(on_val ? "val_file" : "test_file") + " has no documents to score");
  const Evaluation ev = evaluate(model, docs, index, exp.train.prediction_threshold, exp.ks);
  run.work_output("metrics.json", ev.report.to_json());
  run.work_output("metrics.tsv", ev.report.per_label_tsv());
  run.log("micro-F1 " + format_double(ev.report.micro_f1) + ", macro-F1 " + format_double(ev.report.macro_f1));
}

void predict_cmd(Run& run) {
  const RunConfig& cfg = run.cfg();
  const ExperimentConfig exp = cfg.experiment();
  const PreparedData d = load_prepared(run);
  const auto g = load_graph(run);
  const auto index = load_mask(run, exp.tau);
  Model model = load_model(run, d, g);
  const auto docs = parse_corpus_jsonl(run.input(cfg.get("predict_file").empty() ? "test_file" : "predict_file"));
  const auto max_len = static_cast<std::size_t>(cfg.count("max_len"));
  std::vector<std::vector<int>> tokens;
  std::vector<DocMask> masks;
  for (const auto& doc : docs) {
    tokens.push_back(d.vocab.encode(xmlc::preprocess(doc.text, max_len)));
    masks.push_back(model.mask_for(doc.aux, index));
  }
  const auto scores = model.predict(tokens, masks);
  const std::size_t k = static_cast<std::size_t>(cfg.count("predict_k"));
  const bool gating = model.config().hard_gate && model.config().variant != Variant::NoMask;
  std::string out;
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& s = scores[i];
    std::string mode = gating ? "hard" : "none";
    std::vector<int> ranked;
    if (gating && !masks[i].empty()) {
      // Only candidates can be predicted; rank inside T.
      ranked = masks[i].labels;
      std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) { return s[a] > s[b]; });
      if (ranked.size() > k) ranked.resize(k);
    } else {
      if (gating) {
        mode = "fallback";
        ++fallbacks;
        run.log("document " + docs[i].doc_id + " has no known auxiliary codes; gating suspended");
      }
      ranked = top_k(s, k);
    }
    nlohmann::ordered_json j;
    j["doc_id"] = docs[i].doc_id;
    j["gating"] = mode;
    j["candidates"] = masks[i].labels.size();
    nlohmann::ordered_json top = nlohmann::ordered_json::array();
    for (int l : ranked) top.push_back({{"code", d.catalog.code(l)}, {"score", s[l]}});
    j["top_k"] = top;
    nlohmann::ordered_json predicted = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < s.size(); ++l)
      if (s[l] >= exp.train.prediction_threshold) predicted.push_back(d.catalog.code(static_cast<int>(l)));
    j["predicted"] = predicted;
    out += j.dump() + "\n";
  }
  run.work_output("predictions.jsonl", out);
  run.log(std::to_string(docs.size()) + " documents scored, " + std::to_string(fallbacks) + " without a mask");
}

void ablate_cmd(Run& run) {
  const RunConfig& cfg = run.cfg();
  ExperimentConfig exp = cfg.experiment();
  exp.train.verbose = run.verbose();
  if (!cfg.get("embedding_file").empty()) run.input("embedding_file");
  const PreparedData d = load_prepared(run);
  std::vector<Variant> variants;
  for (const auto& v : cfg.list("ablation_variants")) variants.push_back(parse_variant(v));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : cfg.list("ablation_seeds")) seeds.push_back(std::stoull(s));
  const AblationReport rep = ablate(d, exp, variants, seeds);
  run.work_output("ablation.json", rep.to_json());
  run.work_output("ablation.tsv", rep.to_tsv());
  for (Variant v : variants)
    run.log(std::string(to_string(v)) + " mean micro-F1 " + format_double(rep.mean_micro_f1(v)));
}

}  // namespace

Manifest run_subcommand(const std::string& name, const RunConfig& cfg, bool verbose) {
  Run run(cfg, name, verbose);
  switch (stage_of(name)) {
    case Stage::Synthetic: gen_synthetic(run); break;
    case Stage::Preprocess: preprocess(run); break;
    case Stage::Graph: build_graph(run); break;
    case Stage::Mask: build_mask(run); break;
    case Stage::Train: train_cmd(run); break;
    case Stage::Evaluate: evaluate_cmd(run); break;
    case Stage::Predict: predict_cmd(run); break;
    case Stage::Ablate: ablate_cmd(run); break;
  }
  return run.finish();
}

std::vector<std::string> replay(const std::string& manifest_file, bool verbose) {
  if (!file_exists(manifest_file)) throw InputError("manifest not found: " + manifest_file);
  const Manifest recorded = Manifest::from_json(read_file(manifest_file), manifest_file);
  RunConfig cfg;
  cfg.merge_text(recorded.config, manifest_file);
  const Manifest fresh = run_subcommand(recorded.subcommand, cfg, verbose);
  std::vector<std::string> differing;
  for (const auto& [path, hash] : recorded.outputs) {
    const auto it = fresh.outputs.find(path);
    if (it == fresh.outputs.end() || it->second != hash) differing.push_back(path);
  }
  return differing;
}

}  // namespace xmlc::cli
