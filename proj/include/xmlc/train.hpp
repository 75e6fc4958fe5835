#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmlc/aux_mask.hpp"
#include "xmlc/metrics.hpp"
#include "xmlc/model.hpp"

namespace xmlc {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. State is keyed by parameter order.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(const std::vector<Parameter*>& params, double lr);
  std::size_t steps() const { return t_; }

  // Exposed for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::size_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

// Scales all gradients together when their joint L2 norm exceeds max_norm.
// Returns the norm before clipping.
double clip_global_norm(const std::vector<Parameter*>& params, double max_norm);

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay = 0.9;
  double clip_norm = 5.0;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  double prediction_threshold = 0.0005;
  bool verbose = false;

  void validate() const;
};

inline double lr_at_epoch(const TrainConfig& c, std::size_t epoch) {
  double lr = c.lr;
  for (std::size_t e = 0; e < epoch; ++e) lr *= c.lr_decay;
  return lr;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_micro_f1 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_micro_f1 = 0.0;
  Adam optimizer;  // state at the best epoch
};

std::string history_csv(const std::vector<EpochRecord>& h);

// Mini-batch training. On return the model holds the best-validation weights
// (or the last ones when `val` is empty). Throws DivergenceError naming the
// first parameter that went non-finite.
TrainResult train(Model& model, std::span<const DocumentRecord> train_docs,
                  std::span<const DocumentRecord> val_docs, const AuxMaskIndex& index,
                  const TrainConfig& cfg);

struct Evaluation {
  MetricsReport report;
  std::vector<std::vector<double>> scores;  // gated probabilities
  std::vector<DocMask> masks;
};

Evaluation evaluate(Model& model, std::span<const DocumentRecord> docs, const AuxMaskIndex& index,
                    double threshold, std::span<const int> ks = kDefaultKs);

// Checkpoint: named parameter blobs plus optimizer state, versioned header.
struct CheckpointMeta {
  std::string config_hash;
  std::uint64_t vocab_hash = 0;
  std::size_t epoch = 0;
};

std::string serialize_checkpoint(Model& model, Adam& opt, const CheckpointMeta& meta);
struct LoadedCheckpoint {
  ModelConfig model_config;
  CheckpointMeta meta;
  std::vector<Parameter> params;
  Adam optimizer;
};
LoadedCheckpoint parse_checkpoint(std::string_view bytes);
// Copies named parameters into the model; every model parameter must be present.
void restore_parameters(Model& model, const std::vector<Parameter>& params);

}  // namespace xmlc
