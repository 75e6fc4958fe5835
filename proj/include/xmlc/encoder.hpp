#pragma once

#include <span>
#include <string>
#include <vector>

#include "xmlc/autodiff.hpp"
#include "xmlc/util.hpp"

namespace xmlc {

enum class Activation { Relu, Tanh };
Activation parse_activation(std::string_view name);
const char* to_string(Activation a);
Var activate(Var x, Activation a);

struct EncoderConfig {
  int kernel = 9;
  std::vector<int> rates{1, 2, 4};
  int num_blocks = 1;
  double dropout = 0.2;
  Activation activation = Activation::Relu;
  bool causal = false;

  // Throws ConfigError on even K, empty/invalid rates, dropout outside [0,1).
  void validate() const;
  // Tokens on each side that can influence one output position.
  int receptive_radius() const;
};

// One Dilated-Res block: m chained dilated convolutions plus a parallel
// single convolution at the first rate.
struct BlockParams {
  std::vector<Parameter> levels;
  Parameter residual;
};

BlockParams init_block(std::size_t dim, const EncoderConfig& cfg, Rng& rng, const std::string& prefix);

// Per-call options. `valid` marks real (1) vs padded (0) positions; empty
// means all real. `rng` non-null turns on dropout.
struct EncodeContext {
  std::span<const double> valid;
  Rng* rng = nullptr;
};

Var conv_level(Var x, Var filters, int rate, const EncoderConfig& cfg);
Var dilated_stack(Var e, std::span<const Var> levels, const EncoderConfig& cfg,
                  std::span<const double> valid = {});
Var residual_block(Var e, std::span<const Var> levels, Var residual, const EncoderConfig& cfg,
                   const EncodeContext& ctx = {});
// Inverted dropout; identity when rng is null or p == 0.
Var dropout(Var x, double p, Rng* rng);

// Embedding lookup, dropout, then the blocks in order.
Var encode(Var embeddings, std::span<const int> tokens, std::span<const std::vector<Var>> levels,
           std::span<const Var> residuals, const EncoderConfig& cfg, const EncodeContext& ctx = {});

}  // namespace xmlc
