#pragma once

#include <span>
#include <vector>

#include "xmlc/autodiff.hpp"

// Differentiable primitives. Every op reads its inputs' values, records one
// node, and registers a closure that pushes the upstream gradient to inputs.
namespace xmlc::ops {

Var matmul(Var a, Var b);
// a · bᵀ without materialising the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var mul(Var a, Var b);
// a[r, :] * v[r] for a rank-2 `a` and rank-1 `v`.
Var broadcast_mul(Var a, Var v);
Var scale(Var a, double c);
Var reshape(Var a, Shape shape);

Var sum(Var a);
// Rank-2 input: mean over `axis`, result is rank-1. Rank-1 input: scalar.
Var mean(Var a, std::size_t axis);
Var concat(std::span<const Var> parts, std::size_t axis);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);

// Rank-1 or rank-2 softmax with max subtraction.
Var softmax(Var a, std::size_t axis);
// Row-wise softmax over columns with valid[c] != 0; invalid columns get
// weight exactly 0. Throws InputError when no column is valid.
Var masked_softmax_rows(Var a, std::span<const double> valid);

Var gather_rows(Var table, std::span<const int> ids);
// out[g] = mean of table rows listed in groups[g]; empty groups give 0.
Var group_mean_rows(Var table, const std::vector<std::vector<int>>& groups);

// Length-preserving padding r(K-1)/2. Throws ConfigError for even K.
int same_padding(int kernel, int dilation);
// x: n×d_in, filters: K×d_in×d_out. Symmetric zero padding, stride 1:
// out[s, o] = Σ_j Σ_c filters[j, c, o] · x_pad[s + r·j, c].
Var conv1d_dilated(Var x, Var filters, int dilation, int padding);
// Causal variant: out[s] = Σ_j filters[j] · x[s - r·j], length preserved.
Var conv1d_causal(Var x, Var filters, int dilation);

inline constexpr double kBceEps = 1e-12;
// Σ_i -y log p - (1-y) log(1-p), p clamped to [eps, 1-eps].
Var bce_loss(Var pred, const Tensor& gold);
// Same loss taken on logits z with p = sigmoid(z), without the clamp:
// Σ_i softplus(z) - y z. Gradient sigmoid(z) - y stays alive when p saturates.
Var bce_with_logits(Var logits, const Tensor& gold);

}  // namespace xmlc::ops
