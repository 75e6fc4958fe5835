#pragma once

#include <span>

#include "xmlc/autodiff.hpp"

namespace xmlc {

struct AttentionOutput {
  Var alpha;  // L×n, rows sum to 1, zero on padded positions
  Var context; // L×d
};

// scores = H · Dᵀ, softmax over the sequence axis, C = alpha · D.
// Empty `valid` means every position is real.
AttentionOutput label_attention(Var d, Var h_masked, std::span<const double> valid = {});

// z_l = C_l · w + b_l; w is d×1, b has length L.
Var classifier_logits(Var context, Var w, Var b);
// ŷ = sigmoid(z).
Var classify(Var context, Var w, Var b);

// Summed binary cross-entropy over labels.
Var label_loss(Var probs, const Tensor& gold);
// The same loss evaluated from logits; used for training.
Var label_loss_logits(Var logits, const Tensor& gold);

}  // namespace xmlc
