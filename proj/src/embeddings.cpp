#include "xmlc/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xmlc/errors.hpp"
#include "xmlc/util.hpp"

namespace xmlc {
namespace {

constexpr double kMaxRowNorm = 100.0;

void fill_random_row(double* row, std::size_t dim, Rng& rng) {
  for (std::size_t c = 0; c < dim; ++c) row[c] = (rng.uniform() - 0.5) / static_cast<double>(dim);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

EmbeddingTable random_embeddings(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ArgumentError("embedding dimension must be positive");
  EmbeddingTable t{Tensor({vocab_size, dim})};
  Rng rng(derive_seed(seed, 0x656d62));
  for (std::size_t r = 0; r < vocab_size; ++r) fill_random_row(t.matrix.ptr() + r * dim, dim, rng);
  if (vocab_size > 0) std::fill_n(t.matrix.ptr(), dim, 0.0);
  return t;
}

EmbeddingTable train_skipgram(std::span<const std::vector<int>> sequences, const Vocabulary& vocab,
                              const SkipGramConfig& cfg) {
  if (cfg.dim == 0) throw ArgumentError("embedding dimension must be positive");
  const std::size_t V = vocab.size(), d = cfg.dim;
  EmbeddingTable table = random_embeddings(V, d, cfg.seed);
  if (cfg.epochs == 0) return table;

  // Negative-sampling distribution ∝ freq^0.75, as a cumulative table.
  std::vector<double> cdf(V, 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < V; ++i) {
    acc += std::pow(static_cast<double>(vocab.frequencies()[i]), 0.75);
    cdf[i] = acc;
  }
  const bool can_sample = acc > 0.0;

  std::vector<double> out_vecs(V * d, 0.0);
  std::vector<double> grad(d);
  double* in_vecs = table.matrix.ptr();
  Rng rng(derive_seed(cfg.seed, 0x736b6970));

  std::size_t total = 0;
  for (const auto& s : sequences) total += s.size();
  const double total_steps = static_cast<double>(std::max<std::size_t>(1, total * cfg.epochs));
  std::size_t step = 0;

  auto train_pair = [&](int input, int target, double lr) {
    double* in = in_vecs + static_cast<std::size_t>(input) * d;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t k = 0; k <= cfg.negatives; ++k) {
      int word = target;
      double label = 1.0;
      if (k > 0) {
        if (!can_sample) break;
        const double u = rng.uniform() * acc;
        word = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (word >= static_cast<int>(V)) word = static_cast<int>(V) - 1;
        if (word == target) continue;
        label = 0.0;
      }
      double* out = out_vecs.data() + static_cast<std::size_t>(word) * d;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += in[c] * out[c];
      const double g = (label - sigmoid(dot)) * lr;
      for (std::size_t c = 0; c < d; ++c) grad[c] += g * out[c];
      for (std::size_t c = 0; c < d; ++c) out[c] += g * in[c];
    }
    for (std::size_t c = 0; c < d; ++c) in[c] += grad[c];
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& seq : sequences) {
      for (std::size_t pos = 0; pos < seq.size(); ++pos, ++step) {
        const int center = seq[pos];
        if (center == kPadId) continue;
        const double lr =
            cfg.learning_rate * std::max(1e-4, 1.0 - static_cast<double>(step) / total_steps);
        const std::size_t shrink = cfg.window ? rng.below(cfg.window) : 0;
        const std::size_t span = cfg.window - shrink;
        const std::size_t lo = pos >= span ? pos - span : 0;
        const std::size_t hi = std::min(seq.size() - 1, pos + span);
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == pos || seq[c] == kPadId) continue;
          train_pair(seq[c], center, lr);
        }
      }
    }
  }

  for (std::size_t r = 0; r < V; ++r) {
    double* row = in_vecs + r * d;
    double n2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) n2 += row[c] * row[c];
    if (n2 > kMaxRowNorm * kMaxRowNorm) {
      const double f = kMaxRowNorm / std::sqrt(n2);
      for (std::size_t c = 0; c < d; ++c) row[c] *= f;
    }
  }
  std::fill_n(in_vecs, d, 0.0);
  return table;
}

EmbeddingTable parse_embeddings(std::string_view contents, const Vocabulary& vocab,
                                std::size_t expected_dim, std::uint64_t seed) {
  const auto lines = split(contents, '\n');
  if (lines.empty() || trim(lines[0]).empty()) throw FormatError("embedding file is empty", 1);
  std::istringstream header(lines[0]);
  std::size_t count = 0, dim = 0;
  if (!(header >> count >> dim)) throw FormatError("embedding header must be 'V d'", 1);
  if (dim != expected_dim) {
    throw FormatError("embedding dimension " + std::to_string(dim) + " does not match configured " +
                          std::to_string(expected_dim),
                      1);
  }
  const std::size_t V = vocab.size();
  Tensor m({V, dim});
  std::vector<bool> seen(V, false);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string line = trim(lines[i]);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    for (auto& f : split(line, ' '))
      if (!f.empty()) fields.push_back(std::move(f));
    if (fields.size() != dim + 1) {
      throw FormatError("expected " + std::to_string(dim + 1) + " fields, got " +
                            std::to_string(fields.size()),
                        i + 1);
    }
    const int id = vocab.id(fields[0]);
    if (id == kUnkId && fields[0] != kUnkToken) continue;  // not in our vocabulary
    for (std::size_t c = 0; c < dim; ++c) {
      try {
        std::size_t used = 0;
        m[id * dim + c] = std::stod(fields[c + 1], &used);
        if (used != fields[c + 1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw FormatError("non-numeric value '" + fields[c + 1] + "'", i + 1);
      }
    }
    seen[id] = true;
  }
  for (std::size_t r = 0; r < V; ++r) {
    if (seen[r]) continue;
    Rng rng(derive_seed(seed, fnv1a(vocab.token(static_cast<int>(r)))));
    fill_random_row(m.ptr() + r * dim, dim, rng);
  }
  std::fill_n(m.ptr(), dim, 0.0);
  (void)count;
  return EmbeddingTable{std::move(m)};
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                               std::size_t expected_dim, std::uint64_t seed) {
  return parse_embeddings(read_file(path), vocab, expected_dim, seed);
}

std::string serialize_embeddings(const EmbeddingTable& table, const Vocabulary& vocab) {
  std::string out = std::to_string(table.rows()) + " " + std::to_string(table.dim()) + "\n";
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out += vocab.token(static_cast<int>(r));
    for (std::size_t c = 0; c < table.dim(); ++c) {
      out += ' ';
      out += format_double(table.matrix[r * table.dim() + c]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace xmlc
