#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xmlc/attention.hpp"
#include "xmlc/aux_mask.hpp"
#include "xmlc/encoder.hpp"
#include "xmlc/label_graph.hpp"

namespace xmlc {

enum class Variant { Full, NoLabelFeature, NoMask, SwapEmbeddings };
Variant parse_variant(std::string_view name);  // ArgumentError when unknown
const char* to_string(Variant v);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t num_labels = 0;
  std::size_t dim = 100;
  EncoderConfig encoder;
  NormMode norm = NormMode::SelfLoopRowNorm;
  Variant variant = Variant::Full;
  bool hard_gate = true;
  std::uint64_t seed = 1;

  void validate() const;
  // key=value lines; used inside checkpoints.
  std::string serialize() const;
  static ModelConfig parse(std::string_view text);
};

// Parameters bound to one tape.
struct BoundModel {
  Var embedding;
  std::vector<std::vector<Var>> levels;
  std::vector<Var> residuals;
  Var w, b;
  Var h_label;  // L×d, shared by every document on the tape
};

struct DocForward {
  Var logits;
  Var probs;  // ŷ = sigmoid(logits), length L, before any gating
  AttentionOutput attention;
};

class Model {
 public:
  // `embedding_init` must be vocab_size×dim. Its PAD row is zeroed.
  Model(ModelConfig cfg, Tensor propagation, std::vector<std::vector<int>> descriptors,
        Tensor embedding_init);

  const ModelConfig& config() const { return cfg_; }
  const Tensor& propagation() const { return propagation_; }
  const std::vector<std::vector<int>>& descriptors() const { return descriptors_; }

  std::vector<Parameter*> parameters();
  Parameter* find(const std::string& name);
  Parameter& embedding() { return embedding_; }
  // Classifier bias b_l = logit(rates[l]), so an untrained model already
  // scores each label at its base rate. Rates must lie in (0, 1).
  void set_label_prior(std::span<const double> rates);

  BoundModel bind(Tape& tape);
  // `valid` may be empty (no padding); `rng` non-null turns on dropout.
  DocForward forward(Tape& tape, const BoundModel& m, std::span<const int> tokens,
                     std::span<const double> indicator, std::span<const double> valid = {},
                     Rng* rng = nullptr) const;

  // Candidate set the variant actually uses.
  DocMask mask_for(const AuxCodes& aux, const AuxMaskIndex& index) const;
  // Zero outside T when hard gating is on and T is non-empty.
  void gate(std::vector<double>& probs, const DocMask& mask) const;

  // Inference: gated probabilities per document, H_label computed once.
  std::vector<std::vector<double>> predict(std::span<const std::vector<int>> tokens,
                                           std::span<const DocMask> masks);

 private:
  ModelConfig cfg_;
  Tensor propagation_;
  std::vector<std::vector<int>> descriptors_;
  Parameter embedding_;
  std::vector<BlockParams> blocks_;
  Parameter gcn_w1_, gcn_w2_;
  Parameter label_u_, label_fc_;
  Parameter cls_w_, cls_b_;
};

}  // namespace xmlc
