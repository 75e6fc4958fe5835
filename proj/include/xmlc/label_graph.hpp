#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmlc/autodiff.hpp"
#include "xmlc/corpus.hpp"

namespace xmlc {

// Directed label co-occurrence graph. A[i][j] = 1 iff P(j | i) >= lambda, with
// the diagonal always set. Counts are kept when the graph was built from a
// corpus; a graph read back from file carries only A.
struct CooccurrenceGraph {
  std::size_t num_labels = 0;
  double lambda = 1.0;
  Tensor adjacency;                       // L×L, entries in {0,1}
  std::vector<std::uint64_t> label_count; // docs containing i
  std::vector<std::uint64_t> joint_count; // L*L, docs containing i and j
  std::string config_hash;

  bool has_counts() const { return !label_count.empty(); }
  // P(j | i); zero when label i never occurs. Needs counts.
  double cond_prob(std::size_t i, std::size_t j) const;
  Tensor cond_prob_matrix() const;
  bool edge(std::size_t i, std::size_t j) const { return adjacency.at(i, j) != 0.0; }
  // 1-entries above the diagonal.
  std::size_t pair_count() const;
};

// Throws LeakageError if any document is not from the training split and
// IngestionError for label ids outside [0, num_labels).
CooccurrenceGraph build_cooccurrence(std::span<const DocumentRecord> train_docs,
                                     std::size_t num_labels, double lambda);

// Re-threshold an already-counted graph.
CooccurrenceGraph rethreshold(const CooccurrenceGraph& g, double lambda);

// "# xmlc-graph v1 config=<hash>", "L lambda pair_count", then one "i j" line
// per 1-entry (diagonal included) in (i, j) order.
std::string serialize_graph(const CooccurrenceGraph& g);
CooccurrenceGraph parse_graph(std::string_view contents);

enum class NormMode { Raw, SelfLoopRowNorm };
NormMode parse_norm_mode(std::string_view name);
const char* to_string(NormMode m);

// Propagation matrix used by the GCN. SelfLoopRowNorm sets the diagonal to 1
// (already true for built graphs) and divides each row by its sum.
Tensor propagation_matrix(const Tensor& adjacency, NormMode mode);

// Mean of descriptor token embeddings per label; empty descriptors give 0.
Var label_features(Var embeddings, const std::vector<std::vector<int>>& descriptors);
Tensor label_features(const Tensor& embeddings, const std::vector<std::vector<int>>& descriptors);
std::vector<int> empty_descriptors(const std::vector<std::vector<int>>& descriptors);

// h1 = relu(Â V W1); H = Â h1 W2.
Var gcn_forward(const Tensor& propagation, Var features, Var w1, Var w2);

}  // namespace xmlc
