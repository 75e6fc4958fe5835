#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xmlc/corpus.hpp"

namespace xmlc {

// A planted auxiliary code: emitted with probability `emission` on documents
// carrying at least one of `labels`.
struct AuxPlant {
  Terminology term = Terminology::Drg;
  std::string code;
  std::vector<int> labels;
  double emission = 1.0;
};

struct GeneratorSpec {
  std::size_t num_labels = 200;
  std::size_t vocab_size = 2000;  // keyword + noise tokens
  std::size_t n_docs = 5000;
  double tail_exponent = 1.0;     // label weight ∝ (rank + 1)^-s
  std::vector<std::vector<int>> cliques;  // first member is drawn, the rest follow
  std::size_t keywords_per_label = 3;
  double noise_rate = 0.85;       // chance a free position is a noise token
  std::vector<AuxPlant> aux;
  std::size_t min_length = 40;
  std::size_t max_length = 100;
  std::uint64_t seed = 1;

  // Beyond the basics: how many Zipf draws per document (uniform in
  // [1, max_head_draws]), guaranteed keyword mentions per gold label, label
  // pairs sharing one keyword set (textually indistinguishable), the chance of
  // an unrelated noise code per terminology, and the split fractions.
  std::size_t max_head_draws = 3;
  std::size_t min_mentions = 2;
  std::vector<std::pair<int, int>> siblings;
  double aux_noise_rate = 0.2;
  double train_fraction = 0.8;
  double val_fraction = 0.1;

  // Throws SpecError.
  void validate() const;
};

// Spec with planted structure for an L-label corpus: small cliques among the
// mid-frequency labels, sibling pairs in different groups, DRG groups of 8
// (always emitted), CPT groups of 4 (0.8) and one drug code per label (0.5).
GeneratorSpec planted_spec(std::size_t num_labels, std::size_t n_docs, std::uint64_t seed);

struct GroundTruth {
  std::vector<std::vector<int>> cliques;
  std::vector<std::pair<int, int>> siblings;
  std::vector<AuxPlant> aux;
  std::vector<double> label_weight;
  std::vector<std::string> doc_ids;
  std::vector<std::vector<int>> doc_labels;
  std::vector<Split> doc_split;
  std::size_t rejected = 0;  // documents replaced by the rejection pass

  std::string to_json() const;
  static GroundTruth from_json(std::string_view text);
};

struct SyntheticCorpus {
  std::vector<RawDocument> docs;
  std::string catalog_tsv;
  GroundTruth truth;

  std::vector<RawDocument> split(Split s) const;
};

// Keyword tokens of a label (what its descriptor says).
std::vector<std::string> label_keywords(const GeneratorSpec& spec, int label);
std::string label_code(int label);

SyntheticCorpus generate(const GeneratorSpec& spec);

struct AuditReport {
  std::vector<std::string> flagged_docs;
  std::vector<std::string> issues;
  bool passed() const { return flagged_docs.empty() && issues.empty(); }
};

// Recomputes label sets, clique closure, aux consistency, emission rates and
// the λ=1 certificate from the corpus and compares them to the ground truth.
AuditReport verify(const std::vector<RawDocument>& docs, const GroundTruth& truth);

}  // namespace xmlc
