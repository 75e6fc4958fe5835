#include "xmlc/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/util.hpp"

namespace xmlc {

PreparedData prepare_data(std::span<const RawDocument> train, std::span<const RawDocument> val,
                          std::span<const RawDocument> test, LabelCatalog catalog,
                          std::uint64_t min_count, std::size_t max_len) {
  PreparedData d;
  d.vocab = build_vocab(train, min_count, max_len);
  d.catalog = std::move(catalog);
  d.train = encode_corpus(train, d.vocab, d.catalog, Split::Train, max_len);
  d.val = encode_corpus(val, d.vocab, d.catalog, Split::Validation, max_len);
  d.test = encode_corpus(test, d.vocab, d.catalog, Split::Test, max_len);
  return d;
}

PreparedData prepare_synthetic(const SyntheticCorpus& corpus, std::uint64_t min_count,
                               std::size_t max_len) {
  return prepare_data(corpus.split(Split::Train), corpus.split(Split::Validation),
                      corpus.split(Split::Test), LabelCatalog::parse(corpus.catalog_tsv), min_count,
                      max_len);
}

ExperimentConfig desk_experiment() {
  ExperimentConfig c;
  c.dim = 32;
  c.encoder.kernel = 3;
  c.encoder.dropout = 0.0;
  c.tau = 0.05;
  c.train.lr = 3e-3;
  c.train.lr_decay = 0.97;
  c.train.batch_size = 8;
  c.train.max_epochs = 15;
  c.train.patience = 5;
  c.train.prediction_threshold = 0.5;
  return c;
}

EmbeddingTable initial_embeddings(const PreparedData& data, const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.train.seed;
  if (cfg.variant == Variant::SwapEmbeddings) {
    if (cfg.embedding_file.empty()) return random_embeddings(data.vocab.size(), cfg.dim, seed);
    return load_embeddings(cfg.embedding_file, data.vocab, cfg.dim, seed);
  }
  std::vector<std::vector<int>> seqs;
  seqs.reserve(data.train.size());
  for (const auto& doc : data.train) seqs.push_back(doc.tokens);
  SkipGramConfig sg;
  sg.dim = cfg.dim;
  sg.epochs = cfg.skipgram_epochs;
  sg.window = cfg.skipgram_window;
  sg.negatives = cfg.skipgram_negatives;
  sg.seed = seed;
  return train_skipgram(seqs, data.vocab, sg);
}

std::vector<double> label_rates(std::span<const DocumentRecord> train_docs, std::size_t num_labels) {
  std::vector<double> rates(num_labels, 1.0);
  for (const auto& d : train_docs)
    for (int l : d.labels) rates.at(static_cast<std::size_t>(l)) += 1.0;
  for (double& r : rates) r /= static_cast<double>(train_docs.size()) + 2.0;
  return rates;
}

Model build_model(const PreparedData& data, const CooccurrenceGraph& graph,
                  const EmbeddingTable& embeddings, const ExperimentConfig& cfg) {
  ModelConfig mc;
  mc.vocab_size = data.vocab.size();
  mc.num_labels = data.catalog.size();
  mc.dim = cfg.dim;
  mc.encoder = cfg.encoder;
  mc.norm = cfg.norm;
  mc.variant = cfg.variant;
  mc.hard_gate = cfg.hard_gate;
  mc.seed = cfg.train.seed;
  Model m(mc, propagation_matrix(graph.adjacency, cfg.norm), data.catalog.descriptor_ids(data.vocab),
          embeddings.matrix);
  m.set_label_prior(label_rates(data.train, mc.num_labels));
  return m;
}

RunResult run_experiment(const PreparedData& data, const ExperimentConfig& cfg,
                         const EmbeddingTable* embeddings) {
  const std::size_t L = data.catalog.size();
  const auto graph = build_cooccurrence(data.train, L, cfg.lambda);
  const auto index = build_mask_index(data.train, L, cfg.tau);
  const EmbeddingTable init = embeddings ? *embeddings : initial_embeddings(data, cfg);
  Model model = build_model(data, graph, init, cfg);
  RunResult r;
  r.training = train(model, data.train, data.val, index, cfg.train);
  r.test = evaluate(model, data.test, index, cfg.train.prediction_threshold, cfg.ks).report;
  return r;
}

const MetricsReport& AblationReport::at(Variant v, std::uint64_t seed) const {
  for (const auto& r : rows)
    if (r.variant == v && r.seed == seed) return r.report;
  throw ArgumentError(std::string("no ablation run for variant ") + to_string(v) + " seed " +
                      std::to_string(seed));
}

double AblationReport::mean_micro_f1(Variant v) const {
  double s = 0.0;
  for (std::uint64_t seed : seeds) s += at(v, seed).micro_f1;
  return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
}

std::vector<double> AblationReport::paired_differences(Variant v) const {
  std::vector<double> out;
  for (std::uint64_t seed : seeds) out.push_back(at(Variant::Full, seed).micro_f1 - at(v, seed).micro_f1);
  return out;
}

std::string AblationReport::to_json() const {
  nlohmann::ordered_json j;
  j["seeds"] = seeds;
  nlohmann::ordered_json vs = nlohmann::ordered_json::object();
  const bool has_full = std::find(variants.begin(), variants.end(), Variant::Full) != variants.end();
  for (Variant v : variants) {
    nlohmann::ordered_json e;
    std::vector<double> f1s, p8;
    for (std::uint64_t s : seeds) {
      f1s.push_back(at(v, s).micro_f1);
      const auto& pk = at(v, s).p_at_k;
      if (pk.count(8)) p8.push_back(pk.at(8));
    }
    e["micro_f1"] = f1s;
    e["mean_micro_f1"] = mean_micro_f1(v);
    if (!p8.empty()) e["p_at_8"] = p8;
    if (has_full && v != Variant::Full) {
      const auto diff = paired_differences(v);
      e["paired_diff_full_minus_variant"] = diff;
      e["mean_paired_diff"] = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(diff.size());
    }
    vs[to_string(v)] = e;
  }
  j["variants"] = vs;
  return j.dump(2) + "\n";
}

std::string AblationReport::to_tsv() const {
  std::string out = "variant\tseed\tmicro_f1\tmacro_f1\tmicro_auc\tmacro_auc\n";
  for (const auto& r : rows)
    out += std::string(to_string(r.variant)) + "\t" + std::to_string(r.seed) + "\t" +
           format_double(r.report.micro_f1) + "\t" + format_double(r.report.macro_f1) + "\t" +
           format_double(r.report.micro_auc) + "\t" + format_double(r.report.macro_auc) + "\n";
  return out;
}

AblationReport ablate(const PreparedData& data, const ExperimentConfig& base,
                      std::span<const Variant> variants, std::span<const std::uint64_t> seeds) {
  if (variants.empty() || seeds.empty()) throw ArgumentError("ablation needs variants and seeds");
  AblationReport rep;
  rep.variants.assign(variants.begin(), variants.end());
  rep.seeds.assign(seeds.begin(), seeds.end());
  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = base;
    cfg.train.seed = seed;
    cfg.variant = Variant::Full;
    // One pre-training per seed, shared by every variant that uses it.
    const EmbeddingTable shared = initial_embeddings(data, cfg);
    for (Variant v : variants) {
      cfg.variant = v;
      const EmbeddingTable* emb = v == Variant::SwapEmbeddings ? nullptr : &shared;
      rep.rows.push_back({v, seed, run_experiment(data, cfg, emb).test});
    }
  }
  return rep;
}

}  // namespace xmlc
