#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmlc/embeddings.hpp"
#include "xmlc/synth.hpp"
#include "xmlc/train.hpp"

namespace xmlc {

// Encoded splits sharing one vocabulary (built from the training split only).
struct PreparedData {
  Vocabulary vocab;
  LabelCatalog catalog;
  std::vector<DocumentRecord> train, val, test;
};

PreparedData prepare_data(std::span<const RawDocument> train, std::span<const RawDocument> val,
                          std::span<const RawDocument> test, LabelCatalog catalog,
                          std::uint64_t min_count = 1, std::size_t max_len = kDefaultMaxLen);
PreparedData prepare_synthetic(const SyntheticCorpus& corpus, std::uint64_t min_count = 1,
                               std::size_t max_len = kDefaultMaxLen);

struct ExperimentConfig {
  std::size_t dim = 100;
  EncoderConfig encoder;
  NormMode norm = NormMode::SelfLoopRowNorm;
  Variant variant = Variant::Full;
  bool hard_gate = true;
  double lambda = 1.0;
  double tau = kDefaultTau;
  std::size_t skipgram_epochs = 5;
  std::size_t skipgram_window = 5;
  std::size_t skipgram_negatives = 5;
  std::string embedding_file;  // swap_embeddings; random init when empty
  TrainConfig train;
  std::vector<int> ks = kDefaultKs;
};

// Settings that train on the planted synthetic corpora within minutes on one
// core: smaller vectors, a width-3 filter, no dropout and a larger step size
// than the full-scale defaults above.
ExperimentConfig desk_experiment();

// Word vectors for a run: skip-gram on the training split, or for
// swap_embeddings the external file (random when none is given).
EmbeddingTable initial_embeddings(const PreparedData& data, const ExperimentConfig& cfg);

// Smoothed training-split frequency (count + 1) / (N + 2) of every label.
std::vector<double> label_rates(std::span<const DocumentRecord> train_docs, std::size_t num_labels);

// The classifier bias starts at the training label prior.
Model build_model(const PreparedData& data, const CooccurrenceGraph& graph,
                  const EmbeddingTable& embeddings, const ExperimentConfig& cfg);

struct RunResult {
  TrainResult training;
  MetricsReport test;
};

// Graph, mask index and embeddings from the training split, then train and
// score the test split. `embeddings` overrides initial_embeddings().
RunResult run_experiment(const PreparedData& data, const ExperimentConfig& cfg,
                         const EmbeddingTable* embeddings = nullptr);

struct AblationRow {
  Variant variant;
  std::uint64_t seed;
  MetricsReport report;
};

struct AblationReport {
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  const MetricsReport& at(Variant v, std::uint64_t seed) const;
  double mean_micro_f1(Variant v) const;
  // micro-F1(full) - micro-F1(v), one entry per seed.
  std::vector<double> paired_differences(Variant v) const;
  std::string to_json() const;
  std::string to_tsv() const;
};

// Every variant runs on every seed with the same data. Seeds set both the
// model init and the training stream.
AblationReport ablate(const PreparedData& data, const ExperimentConfig& base,
                      std::span<const Variant> variants, std::span<const std::uint64_t> seeds);

}  // namespace xmlc
