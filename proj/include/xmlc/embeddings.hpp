#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmlc/corpus.hpp"
#include "xmlc/tensor.hpp"

namespace xmlc {

// V×d word vectors aligned to a Vocabulary; the PAD row is all zero.
struct EmbeddingTable {
  Tensor matrix;
  std::size_t dim() const { return matrix.cols(); }
  std::size_t rows() const { return matrix.rows(); }
};

struct SkipGramConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

// word2vec-style initial vectors: uniform in [-0.5, 0.5] / d, PAD zeroed.
EmbeddingTable random_embeddings(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);

// Skip-gram with negative sampling over token-id sequences. Single-threaded
// and fully determined by the seed. epochs == 0 returns the random init.
EmbeddingTable train_skipgram(std::span<const std::vector<int>> sequences, const Vocabulary& vocab,
                              const SkipGramConfig& cfg);

// Text format: "V d" header, then "token f1 ... fd" per line. Tokens absent
// from the file get a per-token seeded random row.
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                               std::size_t expected_dim, std::uint64_t seed);
EmbeddingTable parse_embeddings(std::string_view contents, const Vocabulary& vocab,
                                std::size_t expected_dim, std::uint64_t seed);
std::string serialize_embeddings(const EmbeddingTable& table, const Vocabulary& vocab);

}  // namespace xmlc
