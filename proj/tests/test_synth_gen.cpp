#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "xmlc/aux_mask.hpp"
#include "xmlc/corpus.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/label_graph.hpp"
#include "xmlc/synth.hpp"

using namespace xmlc;

namespace {

std::vector<DocumentRecord> encode_all(const SyntheticCorpus& c) {
  const auto catalog = LabelCatalog::parse(c.catalog_tsv);
  const auto vocab = build_vocab(c.docs, 1);
  return encode_corpus(c.docs, vocab, catalog, Split::Train);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * (i + j - 1);
    i = j;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::string corpus_bytes(const SyntheticCorpus& c) {
  return serialize_corpus_jsonl(c.docs) + c.catalog_tsv + c.truth.to_json();
}

}  // namespace

TEST_CASE("planted cliques are exactly the lambda=1 edges") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto corpus = generate(planted_spec(200, 2000, seed));
    const auto docs = encode_all(corpus);
    const auto g = build_cooccurrence(docs, 200, 1.0);
    std::map<int, int> clique_of;
    for (std::size_t c = 0; c < corpus.truth.cliques.size(); ++c)
      for (int l : corpus.truth.cliques[c]) clique_of[l] = static_cast<int>(c);
    for (const auto& c : corpus.truth.cliques)
      for (int a : c)
        for (int b : c) {
          CHECK(g.label_count[a] > 0);
          CHECK(g.edge(a, b));
        }
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) {
        if (i == j || !g.edge(i, j)) continue;
        INFO("edge " << i << " -> " << j);
        REQUIRE(clique_of.count(i));
        REQUIRE(clique_of.count(j));
        CHECK(clique_of[i] == clique_of[j]);
      }
    // Certificate by direct search: no document holds a without b.
    for (const auto& c : corpus.truth.cliques)
      for (const auto& d : docs) {
        const auto present = std::count_if(c.begin(), c.end(), [&](int l) {
          return std::binary_search(d.labels.begin(), d.labels.end(), l);
        });
        CHECK((present == 0 || static_cast<std::size_t>(present) == c.size()));
      }
  }
}

TEST_CASE("rejection pass removes accidental perfect co-occurrence") {
  const auto corpus = generate(planted_spec(200, 1000, 9));
  CHECK(corpus.truth.rejected > 0);
  const auto rep = verify(corpus.docs, corpus.truth);
  for (const auto& i : rep.issues) INFO(i);
  CHECK(rep.passed());
}

TEST_CASE("noise-free single-keyword corpus is that keyword only") {
  GeneratorSpec s;
  s.num_labels = 1;
  s.vocab_size = 1;
  s.keywords_per_label = 1;
  s.noise_rate = 0.0;
  s.n_docs = 50;
  s.min_length = 5;
  s.max_length = 30;
  const auto c = generate(s);
  const std::string kw = label_keywords(s, 0).at(0);
  for (const auto& d : c.docs) {
    const auto toks = preprocess(d.text);
    REQUIRE(toks.size() >= 5);
    for (const auto& t : toks) CHECK(t == kw);
  }
  // Noise tokens would also be available; the rate alone must suppress them.
  s.vocab_size = 100;
  for (const auto& d : generate(s).docs)
    for (const auto& t : preprocess(d.text)) CHECK(t == kw);
}

TEST_CASE("empirical aux conditionals match the planted tables") {
  GeneratorSpec s;
  s.num_labels = 20;
  s.vocab_size = 200;
  s.n_docs = 10000;
  s.seed = 5;
  s.aux = {{Terminology::Drg, "X", {3}, 1.0}, {Terminology::Cpt, "Y", {0, 1}, 0.6}};
  const auto c = generate(s);
  const auto docs = encode_all(c);
  const auto index = build_mask_index(docs, 20, 0.0);
  const auto* x = index.find(Terminology::Drg, "X");
  REQUIRE(x != nullptr);
  const auto e3 = std::find_if(x->entries.begin(), x->entries.end(), [](const auto& e) { return e.label == 3; });
  REQUIRE(e3 != x->entries.end());
  CHECK(std::abs(e3->prob - 1.0) <= 0.02);

  // Emission rate of Y among documents carrying label 0 or 1.
  std::size_t relevant = 0, emitted = 0;
  for (const auto& d : docs) {
    const bool r = std::binary_search(d.labels.begin(), d.labels.end(), 0) ||
                   std::binary_search(d.labels.begin(), d.labels.end(), 1);
    const bool y = std::find(d.aux.cpt.begin(), d.aux.cpt.end(), "Y") != d.aux.cpt.end();
    CHECK((!y || r));
    relevant += r;
    emitted += r && y;
  }
  REQUIRE(relevant > 1000);
  CHECK(std::abs(static_cast<double>(emitted) / relevant - 0.6) <= 0.02);
}

TEST_CASE("verify passes fresh corpora and flags exactly one flipped document") {
  std::set<std::string> seen;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto c = generate(planted_spec(200, 1500, seed));
    const auto rep = verify(c.docs, c.truth);
    for (const auto& i : rep.issues) INFO(i);
    CHECK(rep.passed());
    seen.insert(corpus_bytes(c));

    auto docs = c.docs;
    auto& victim = docs[17];
    const std::set<std::string> have(victim.labels.begin(), victim.labels.end());
    for (int l = 199; l >= 0; --l)
      if (!have.count(label_code(l))) {
        victim.labels[0] = label_code(l);
        break;
      }
    const auto flipped = verify(docs, c.truth);
    REQUIRE(flipped.flagged_docs.size() == 1);
    CHECK(flipped.flagged_docs[0] == victim.doc_id);
  }
  CHECK(seen.size() == 3);
}

TEST_CASE("verify flags an aux code on an unrelated document") {
  const auto c = generate(planted_spec(40, 300, 4));
  auto docs = c.docs;
  // DRG0 covers labels 0..7; put it on a document without any of them.
  for (std::size_t i = 0; i < c.truth.doc_labels.size(); ++i) {
    const auto& ls = c.truth.doc_labels[i];
    if (std::all_of(ls.begin(), ls.end(), [](int l) { return l >= 8; })) {
      docs[i].aux.drg.push_back("DRG0");
      const auto rep = verify(docs, c.truth);
      REQUIRE(rep.flagged_docs.size() == 1);
      CHECK(rep.flagged_docs[0] == docs[i].doc_id);
      return;
    }
  }
  FAIL("no document without labels 0..7");
}

TEST_CASE("generation is byte-identical under a fixed seed") {
  const auto s = planted_spec(120, 800, 77);
  const auto a = corpus_bytes(generate(s));
  CHECK(a == corpus_bytes(generate(s)));
  auto s2 = s;
  s2.seed = 78;
  CHECK(a != corpus_bytes(generate(s2)));
}

TEST_CASE("label frequencies follow the Zipf ranking") {
  for (auto [n, seed] : {std::pair{1000u, 21u}, {1000u, 22u}, {1000u, 23u}, {5000u, 21u}}) {
    const auto c = generate(planted_spec(200, n, seed));
    std::vector<double> freq(200, 0.0);
    for (const auto& ls : c.truth.doc_labels)
      for (int l : ls) freq[l] += 1;
    const double rho = spearman(freq, c.truth.label_weight);
    INFO("n_docs=" << n << " rho=" << rho);
    CHECK(rho > 0.95);
  }
}

TEST_CASE("ground truth JSON round-trips") {
  const auto c = generate(planted_spec(60, 200, 3));
  const auto back = GroundTruth::from_json(c.truth.to_json());
  CHECK(back.to_json() == c.truth.to_json());
  CHECK(back.doc_labels == c.truth.doc_labels);
  CHECK_THROWS_AS(GroundTruth::from_json("{\"cliques\": 3}"), FormatError);
}

TEST_CASE("infeasible specs are rejected") {
  GeneratorSpec s;
  s.num_labels = 200;
  s.keywords_per_label = 3;
  s.vocab_size = 599;
  CHECK_THROWS_AS(generate(s), SpecError);
  s.vocab_size = 600;
  s.n_docs = 10;
  CHECK_NOTHROW(generate(s));

  auto bad = planted_spec(50, 10, 1);
  bad.cliques.push_back({bad.cliques[0][0], 49});
  CHECK_THROWS_AS(bad.validate(), SpecError);
  bad = planted_spec(50, 10, 1);
  bad.aux[0].emission = 0.0;
  CHECK_THROWS_AS(bad.validate(), SpecError);
  bad = planted_spec(50, 10, 1);
  bad.min_length = 120;
  CHECK_THROWS_AS(bad.validate(), SpecError);
}
