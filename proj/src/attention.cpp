#include "xmlc/attention.hpp"

#include <vector>

#include "xmlc/errors.hpp"
#include "xmlc/ops.hpp"

namespace xmlc {

AttentionOutput label_attention(Var d, Var h_masked, std::span<const double> valid) {
  if (d.shape().size() != 2 || h_masked.shape().size() != 2 || d.shape()[1] != h_masked.shape()[1])
    throw DimensionError("attention: document " + to_string(d.shape()) + " vs labels " +
                         to_string(h_masked.shape()));
  const std::size_t n = d.shape()[0];
  std::vector<double> all;
  if (valid.empty()) {
    all.assign(n, 1.0);
    valid = all;
  }
  if (valid.size() != n)
    throw DimensionError("attention: validity mask of length " + std::to_string(valid.size()) +
                         " for " + std::to_string(n) + " positions");
  Var scores = ops::matmul_nt(h_masked, d);
  Var alpha = ops::masked_softmax_rows(scores, valid);
  return {alpha, ops::matmul(alpha, d)};
}

Var classifier_logits(Var context, Var w, Var b) {
  const std::size_t L = context.shape()[0];
  if (b.value().size() != L)
    throw DimensionError("classifier bias " + to_string(b.shape()) + " for " + std::to_string(L) +
                         " labels");
  return ops::add(ops::reshape(ops::matmul(context, w), {L}), b);
}

Var classify(Var context, Var w, Var b) { return ops::sigmoid(classifier_logits(context, w, b)); }

Var label_loss(Var probs, const Tensor& gold) { return ops::bce_loss(probs, gold); }
Var label_loss_logits(Var logits, const Tensor& gold) { return ops::bce_with_logits(logits, gold); }

}  // namespace xmlc
