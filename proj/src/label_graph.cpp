#include "xmlc/label_graph.hpp"

#include <cstdio>
#include <sstream>

#include "xmlc/errors.hpp"
#include "xmlc/ops.hpp"
#include "xmlc/util.hpp"

namespace xmlc {

double CooccurrenceGraph::cond_prob(std::size_t i, std::size_t j) const {
  if (!has_counts()) throw ArgumentError("graph carries no co-occurrence counts");
  if (label_count[i] == 0) return 0.0;
  return static_cast<double>(joint_count[i * num_labels + j]) /
         static_cast<double>(label_count[i]);
}

Tensor CooccurrenceGraph::cond_prob_matrix() const {
  Tensor p({num_labels, num_labels});
  for (std::size_t i = 0; i < num_labels; ++i)
    for (std::size_t j = 0; j < num_labels; ++j) p[i * num_labels + j] = cond_prob(i, j);
  return p;
}

std::size_t CooccurrenceGraph::pair_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < num_labels; ++i)
    for (std::size_t j = i + 1; j < num_labels; ++j)
      if (edge(i, j)) ++n;
  return n;
}

CooccurrenceGraph rethreshold(const CooccurrenceGraph& g, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("lambda must lie in [0, 1]");
  CooccurrenceGraph out = g;
  out.lambda = lambda;
  const std::size_t L = g.num_labels;
  out.adjacency = Tensor({L, L});
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j)
      if (i == j || (g.label_count[i] > 0 && g.cond_prob(i, j) >= lambda))
        out.adjacency[i * L + j] = 1.0;
  }
  return out;
}

CooccurrenceGraph build_cooccurrence(std::span<const DocumentRecord> train_docs,
                                     std::size_t num_labels, double lambda) {
  for (const auto& d : train_docs) {
    if (d.split != Split::Train) {
      throw LeakageError("label graph may only read training documents; got " + d.doc_id +
                         " from the " + to_string(d.split) + " split");
    }
  }
  CooccurrenceGraph g;
  g.num_labels = num_labels;
  g.label_count.assign(num_labels, 0);
  g.joint_count.assign(num_labels * num_labels, 0);
  for (const auto& d : train_docs) {
    for (int a : d.labels) {
      if (a < 0 || static_cast<std::size_t>(a) >= num_labels)
        throw IngestionError("document " + d.doc_id + " has label id " + std::to_string(a) +
                             " outside the catalog");
    }
    for (int a : d.labels) {
      ++g.label_count[a];
      for (int b : d.labels) ++g.joint_count[a * num_labels + b];
    }
  }
  return rethreshold(g, lambda);
}

std::string serialize_graph(const CooccurrenceGraph& g) {
  std::string out = "# xmlc-graph v1 config=" + g.config_hash + "\n";
  out += std::to_string(g.num_labels) + " " + format_double(g.lambda) + " " +
         std::to_string(g.pair_count()) + "\n";
  for (std::size_t i = 0; i < g.num_labels; ++i)
    for (std::size_t j = 0; j < g.num_labels; ++j)
      if (g.edge(i, j)) out += std::to_string(i) + " " + std::to_string(j) + "\n";
  return out;
}

CooccurrenceGraph parse_graph(std::string_view contents) {
  const auto lines = split(contents, '\n');
  const std::string magic = "# xmlc-graph v1";
  if (lines.empty() || lines[0].rfind(magic, 0) != 0) throw FormatError("not a graph file", 1);
  CooccurrenceGraph g;
  const auto pos = lines[0].find("config=");
  if (pos != std::string::npos) g.config_hash = trim(lines[0].substr(pos + 7));
  if (lines.size() < 2) throw FormatError("graph header missing", 2);
  std::istringstream head(lines[1]);
  std::size_t declared_pairs = 0;
  if (!(head >> g.num_labels >> g.lambda >> declared_pairs))
    throw FormatError("graph header must be 'L lambda pair_count'", 2);
  const std::size_t L = g.num_labels;
  g.adjacency = Tensor({L, L});
  for (std::size_t n = 2; n < lines.size(); ++n) {
    if (trim(lines[n]).empty()) continue;
    std::istringstream row(lines[n]);
    long long i = -1, j = -1;
    std::string extra;
    if (!(row >> i >> j) || (row >> extra)) throw FormatError("edge line must be 'i j'", n + 1);
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= L || static_cast<std::size_t>(j) >= L)
      throw FormatError("edge index out of range", n + 1);
    g.adjacency[static_cast<std::size_t>(i) * L + static_cast<std::size_t>(j)] = 1.0;
  }
  if (g.pair_count() != declared_pairs)
    throw FormatError("pair_count " + std::to_string(declared_pairs) + " disagrees with edges", 2);
  return g;
}

NormMode parse_norm_mode(std::string_view name) {
  if (name == "raw") return NormMode::Raw;
  if (name == "self_loop_row_norm") return NormMode::SelfLoopRowNorm;
  throw ConfigError("unknown gcn norm mode '" + std::string(name) + "'");
}

const char* to_string(NormMode m) {
  return m == NormMode::Raw ? "raw" : "self_loop_row_norm";
}

Tensor propagation_matrix(const Tensor& adjacency, NormMode mode) {
  if (adjacency.rank() != 2 || adjacency.rows() != adjacency.cols())
    throw DimensionError("adjacency must be square, got " + to_string(adjacency.shape()));
  Tensor p = adjacency;
  if (mode == NormMode::Raw) return p;
  const std::size_t L = p.rows();
  for (std::size_t i = 0; i < L; ++i) {
    p[i * L + i] = 1.0;
    double s = 0.0;
    for (std::size_t j = 0; j < L; ++j) s += p[i * L + j];
    for (std::size_t j = 0; j < L; ++j) p[i * L + j] /= s;
  }
  return p;
}

Var label_features(Var embeddings, const std::vector<std::vector<int>>& descriptors) {
  return ops::group_mean_rows(embeddings, descriptors);
}

Tensor label_features(const Tensor& embeddings, const std::vector<std::vector<int>>& descriptors) {
  Tape tape(false);
  return label_features(tape.constant(embeddings), descriptors).value();
}

std::vector<int> empty_descriptors(const std::vector<std::vector<int>>& descriptors) {
  std::vector<int> out;
  for (std::size_t i = 0; i < descriptors.size(); ++i)
    if (descriptors[i].empty()) out.push_back(static_cast<int>(i));
  return out;
}

Var gcn_forward(const Tensor& propagation, Var features, Var w1, Var w2) {
  Tape& t = features.tape();
  if (propagation.rank() != 2 || propagation.cols() != features.shape()[0])
    throw DimensionError("propagation " + to_string(propagation.shape()) +
                         " does not match label features " + to_string(features.shape()));
  Var a = t.constant(propagation);
  Var h1 = ops::relu(ops::matmul(ops::matmul(a, features), w1));
  return ops::matmul(ops::matmul(a, h1), w2);
}

}  // namespace xmlc
