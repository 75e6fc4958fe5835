#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/grad_check.hpp"
#include "xmlc/label_graph.hpp"
#include "xmlc/ops.hpp"
#include "xmlc/util.hpp"

using namespace xmlc;
using xmlc::testing::naive_matmul;
using xmlc::testing::random_tensor;

namespace {

DocumentRecord doc(std::vector<int> labels, Split s = Split::Train) {
  DocumentRecord d;
  d.doc_id = "d";
  d.labels = std::move(labels);
  d.split = s;
  return d;
}

std::vector<DocumentRecord> random_corpus(Rng& rng, std::size_t L, std::size_t n) {
  return testing::random_labelled_corpus(rng, L, n);
}

Tensor relu_t(Tensor t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::max(0.0, t[i]);
  return t;
}

Tensor permute_rows(const Tensor& m, const std::vector<int>& perm) {
  Tensor out(m.shape());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(r, c) = m.at(perm[r], c);
  return out;
}

Tensor permute_both(const Tensor& m, const std::vector<int>& perm) {
  Tensor out(m.shape());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(r, c) = m.at(perm[r], perm[c]);
  return out;
}

Tensor gcn_eval(const Tensor& prop, const Tensor& v, const Tensor& w1, const Tensor& w2) {
  Tape t(false);
  return gcn_forward(prop, t.constant(v), t.constant(w1), t.constant(w2)).value();
}

}  // namespace

TEST_CASE("conditional probabilities and thresholding") {
  // labels a=0, b=1
  std::vector<DocumentRecord> docs{doc({0, 1}), doc({0, 1}), doc({1})};
  CooccurrenceGraph g = build_cooccurrence(docs, 2, 1.0);
  CHECK(g.cond_prob(0, 1) == 1.0);
  CHECK(g.cond_prob(1, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(g.edge(0, 1));
  CHECK_FALSE(g.edge(1, 0));
  CHECK(g.edge(0, 0));
  CHECK(g.edge(1, 1));
  CHECK(g.pair_count() == 1);
  // Only entries above the diagonal are counted.
  std::vector<DocumentRecord> mirrored{doc({0, 1}), doc({0, 1}), doc({0})};
  CooccurrenceGraph m = build_cooccurrence(mirrored, 2, 1.0);
  CHECK(m.edge(1, 0));
  CHECK_FALSE(m.edge(0, 1));
  CHECK(m.pair_count() == 0);

  CooccurrenceGraph half = build_cooccurrence(docs, 2, 0.5);
  CHECK(half.edge(1, 0));
  CHECK(rethreshold(g, 0.5).adjacency == half.adjacency);

  std::vector<DocumentRecord> single{doc({0})};
  CooccurrenceGraph s = build_cooccurrence(single, 3, 1.0);
  CHECK(s.adjacency == Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  CHECK(s.cond_prob(2, 0) == 0.0);
}

TEST_CASE("graph construction rejects leakage and unknown labels") {
  std::vector<DocumentRecord> docs{doc({0}), doc({1}, Split::Validation)};
  CHECK_THROWS_AS(build_cooccurrence(docs, 2, 1.0), LeakageError);
  std::vector<DocumentRecord> bad{doc({0, 5})};
  CHECK_THROWS_AS(build_cooccurrence(bad, 2, 1.0), IngestionError);
}

TEST_CASE("random corpora match the counting oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t L = 2 + rng.below(7);
    auto docs = random_corpus(rng, L, 1 + rng.below(20));
    const double lambda = trial % 3 == 0 ? 1.0 : rng.uniform();
    const std::string diff = testing::graph_mismatch(build_cooccurrence(docs, L, lambda), docs, L, lambda);
    CHECK_MESSAGE(diff.empty(), diff);
  }
}

TEST_CASE("graph file round trip") {
  Rng rng(2);
  auto docs = random_corpus(rng, 6, 15);
  CooccurrenceGraph g = build_cooccurrence(docs, 6, 0.6);
  g.config_hash = "abc123";
  const std::string text = serialize_graph(g);
  CooccurrenceGraph back = parse_graph(text);
  CHECK(back.adjacency == g.adjacency);
  CHECK(back.num_labels == 6);
  CHECK(back.lambda == 0.6);
  CHECK(back.config_hash == "abc123");
  CHECK_FALSE(back.has_counts());
  CHECK(serialize_graph(back) == text);

  CHECK_THROWS_AS(parse_graph("nonsense\n"), FormatError);
  CHECK_THROWS_AS(parse_graph("# xmlc-graph v1 config=x\n2 1 0\n0 7\n"), FormatError);
  CHECK_THROWS_AS(parse_graph("# xmlc-graph v1 config=x\n2 1 3\n0 1\n"), FormatError);
}

TEST_CASE("label features are descriptor means") {
  Tensor emb = Tensor::matrix({{0, 0}, {9, 9}, {1, 0}, {0, 1}, {2, 4}});
  Tensor v = label_features(emb, {{2, 3}, {4}, {}});
  CHECK(v == Tensor::matrix({{0.5, 0.5}, {2, 4}, {0, 0}}));
  CHECK(empty_descriptors({{2, 3}, {4}, {}}) == std::vector<int>{2});

  Rng rng(8);
  Tensor big = random_tensor({10, 4}, rng);
  std::vector<int> ids{1, 3, 3, 7, 9};
  Tensor got = label_features(big, {ids});
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0;
    for (int i : ids) s += big.at(i, c);
    CHECK(std::abs(got.at(0, c) - s / 5.0) < 1e-12);
  }
}

TEST_CASE("propagation matrix modes") {
  Tensor a = Tensor::matrix({{1, 1, 0}, {0, 0, 0}, {1, 1, 1}});
  CHECK(propagation_matrix(a, NormMode::Raw) == a);
  Tensor p = propagation_matrix(a, NormMode::SelfLoopRowNorm);
  CHECK(p == Tensor::matrix({{0.5, 0.5, 0}, {0, 1, 0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}}));
  CHECK(parse_norm_mode("raw") == NormMode::Raw);
  CHECK_THROWS_AS(parse_norm_mode("sym"), ConfigError);
}

TEST_CASE("gcn forward against dense arithmetic") {
  Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  Tensor v = Tensor::matrix({{1, 2, 0}, {0, 3, 1}, {4, 0, 2}});
  CHECK(gcn_eval(eye, v, eye, eye) == v);

  // path graph 0 - 1 - 2, raw adjacency with self loops
  Tensor path = Tensor::matrix({{1, 1, 0}, {1, 1, 1}, {0, 1, 1}});
  Rng rng(4);
  Tensor vv = random_tensor({3, 3}, rng), w1 = random_tensor({3, 3}, rng),
         w2 = random_tensor({3, 3}, rng);
  for (NormMode mode : {NormMode::Raw, NormMode::SelfLoopRowNorm}) {
    Tensor p = propagation_matrix(path, mode);
    Tensor h1 = relu_t(naive_matmul(naive_matmul(p, vv), w1));
    Tensor expect = naive_matmul(naive_matmul(p, h1), w2);
    CHECK(max_abs_diff(gcn_eval(p, vv, w1, w2), expect) < 1e-12);
  }

  // raw mode tolerates an all-zero row
  Tensor zero_row = Tensor::matrix({{0, 0}, {1, 1}});
  Tensor out = gcn_eval(zero_row, Tensor::matrix({{1, 1}, {2, 2}}), Tensor::matrix({{1, 0}, {0, 1}}),
                        Tensor::matrix({{1, 0}, {0, 1}}));
  CHECK(out.at(0, 0) == 0.0);
  CHECK(out.all_finite());
}

TEST_CASE("gcn is equivariant to label permutations") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t L = 3 + rng.below(6), d = 2 + rng.below(4);
    auto docs = random_corpus(rng, L, 12);
    CooccurrenceGraph g = build_cooccurrence(docs, L, 0.5);
    Tensor v = random_tensor({L, d}, rng), w1 = random_tensor({d, d}, rng),
           w2 = random_tensor({d, d}, rng);
    std::vector<int> perm(L);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Tensor p = propagation_matrix(g.adjacency, NormMode::SelfLoopRowNorm);
    const Tensor base = gcn_eval(p, v, w1, w2);
    const Tensor pa = propagation_matrix(permute_both(g.adjacency, perm), NormMode::SelfLoopRowNorm);
    const Tensor moved = gcn_eval(pa, permute_rows(v, perm), w1, w2);
    CHECK(max_abs_diff(moved, permute_rows(base, perm)) < 1e-12);
  }
}

TEST_CASE("gcn gradients through both layers and the embedding table") {
  Rng rng(12);
  Tensor adj = Tensor::matrix({{1, 1, 0, 0}, {0, 1, 1, 0}, {1, 0, 1, 1}, {0, 0, 0, 1}});
  const Tensor p = propagation_matrix(adj, NormMode::SelfLoopRowNorm);
  const std::vector<std::vector<int>> desc{{1, 2}, {3}, {2, 4, 4}, {}};
  GradCheckOptions opts;
  opts.kink_tolerant = true;
  for (int seed = 0; seed < 10; ++seed) {
    std::vector<Tensor> inputs{random_tensor({5, 3}, rng), random_tensor({3, 3}, rng),
                               random_tensor({3, 3}, rng)};
    Tensor probe = random_tensor({4, 3}, rng);
    auto rep = grad_check(
        [&](Tape& t, const std::vector<Var>& x) {
          Var h = gcn_forward(p, label_features(x[0], desc), x[1], x[2]);
          return ops::sum(ops::mul(h, t.constant(probe)));
        },
        inputs, opts);
    CHECK_MESSAGE(rep.passed, "rel err " << rep.max_rel_error);
  }
}
