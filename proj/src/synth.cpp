#include "xmlc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/util.hpp"

namespace xmlc {
namespace {

std::string letters(std::size_t n) {
  std::string s;
  do {
    s.insert(s.begin(), static_cast<char>('a' + n % 26));
    n /= 26;
  } while (n);
  return s;
}

std::string keyword_token(std::size_t i) { return "k" + letters(i); }
std::string noise_token(std::size_t i) { return "n" + letters(i); }
std::string noise_code(Terminology t, std::size_t k) {
  return std::string("N") + to_string(t) + std::to_string(k);
}

constexpr std::size_t kNoiseCodes = 20;

struct Layout {
  std::vector<int> keyword_owner;   // label whose keyword block a label uses
  std::vector<int> clique_of;       // -1 when not in a clique
  std::vector<double> cdf;          // cumulative Zipf weights
  std::size_t noise_vocab = 0;
};

Layout make_layout(const GeneratorSpec& s) {
  Layout lay;
  const std::size_t L = s.num_labels;
  lay.keyword_owner.resize(L);
  std::iota(lay.keyword_owner.begin(), lay.keyword_owner.end(), 0);
  for (const auto& [a, b] : s.siblings) lay.keyword_owner[b] = a;
  lay.clique_of.assign(L, -1);
  for (std::size_t c = 0; c < s.cliques.size(); ++c)
    for (int l : s.cliques[c]) lay.clique_of[l] = static_cast<int>(c);
  // Only a clique's first label is drawn; the others arrive by closure, so a
  // clique occupies adjacent ranks instead of inflating its tail members.
  double acc = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const int c = lay.clique_of[l];
    if (c < 0 || s.cliques[c].front() == static_cast<int>(l))
      acc += std::pow(static_cast<double>(l + 1), -s.tail_exponent);
    lay.cdf.push_back(acc);
  }
  lay.noise_vocab = s.vocab_size - L * s.keywords_per_label;
  return lay;
}

std::vector<int> closure(const std::set<int>& seed, const GeneratorSpec& s, const Layout& lay) {
  std::set<int> out = seed;
  for (int l : seed)
    if (lay.clique_of[l] >= 0) out.insert(s.cliques[lay.clique_of[l]].begin(), s.cliques[lay.clique_of[l]].end());
  return {out.begin(), out.end()};
}

// Head draws for the whole corpus by systematic sampling of the Zipf CDF, then
// shuffled across documents: label counts track the weights with O(1) error
// instead of Poisson noise, which keeps the tail ranking intact.
std::vector<std::vector<int>> draw_labels(const GeneratorSpec& s, const Layout& lay,
                                          const std::vector<std::size_t>& draws) {
  const std::size_t total = std::accumulate(draws.begin(), draws.end(), std::size_t{0});
  Rng rng(derive_seed(s.seed, fnv1a("labels")));
  const double offset = rng.uniform();
  std::vector<int> pool(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double u = (static_cast<double>(k) + offset) / static_cast<double>(total) * lay.cdf.back();
    const auto it = std::upper_bound(lay.cdf.begin(), lay.cdf.end(), u);
    pool[k] = static_cast<int>(std::min<std::ptrdiff_t>(it - lay.cdf.begin(), lay.cdf.size() - 1));
  }
  rng.shuffle(pool);
  std::vector<std::vector<int>> out;
  std::size_t at = 0;
  for (std::size_t n : draws) {
    out.push_back(closure(std::set<int>(pool.begin() + at, pool.begin() + at + n), s, lay));
    at += n;
  }
  return out;
}

RawDocument make_doc(std::size_t index, const std::vector<int>& labels, const GeneratorSpec& s,
                     const Layout& lay, Rng& rng) {
  RawDocument d;
  char id[32];
  std::snprintf(id, sizeof id, "syn-%06zu", index);
  d.doc_id = id;
  for (int l : labels) d.labels.push_back(label_code(l));

  auto keyword_of = [&](int label) {
    const std::size_t base = static_cast<std::size_t>(lay.keyword_owner[label]) * s.keywords_per_label;
    return keyword_token(base + rng.below(s.keywords_per_label));
  };
  std::size_t n = s.min_length + rng.below(s.max_length - s.min_length + 1);
  n = std::max(n, labels.size() * s.min_mentions);
  std::vector<std::string> slots(n);
  std::vector<std::size_t> free(n);
  std::iota(free.begin(), free.end(), 0);
  for (int l : labels)
    for (std::size_t m = 0; m < s.min_mentions; ++m) {
      const std::size_t pick = rng.below(free.size());
      slots[free[pick]] = keyword_of(l);
      free[pick] = free.back();
      free.pop_back();
    }
  for (auto& tok : slots) {
    if (!tok.empty()) continue;
    if (lay.noise_vocab > 0 && rng.bernoulli(s.noise_rate)) tok = noise_token(rng.below(lay.noise_vocab));
    else tok = keyword_of(labels[rng.below(labels.size())]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i) d.text += ' ';
    d.text += slots[i];
  }

  for (const auto& p : s.aux) {
    const bool hit = std::any_of(p.labels.begin(), p.labels.end(), [&](int l) {
      return std::binary_search(labels.begin(), labels.end(), l);
    });
    if (hit && rng.bernoulli(p.emission)) d.aux.of(p.term).push_back(p.code);
  }
  for (Terminology t : {Terminology::Drg, Terminology::Cpt, Terminology::Drug})
    if (rng.bernoulli(s.aux_noise_rate)) d.aux.of(t).push_back(noise_code(t, rng.below(kNoiseCodes)));
  return d;
}

// Dense co-occurrence counts over label id lists.
struct Counts {
  std::size_t L;
  std::vector<std::uint32_t> single, joint;
  explicit Counts(std::size_t l) : L(l), single(l, 0), joint(l * l, 0) {}
  void add(const std::vector<int>& labels) {
    for (int a : labels) {
      ++single[a];
      for (int b : labels) ++joint[a * L + b];
    }
  }
};

// (i, j) with i != j, not clique mates, and j on every document holding i.
std::vector<std::pair<int, int>> accidental_pairs(const std::vector<std::vector<int>>& docs,
                                                  std::size_t L, const std::vector<int>& clique_of) {
  Counts c(L);
  for (const auto& d : docs) c.add(d);
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < L; ++i) {
    if (c.single[i] == 0) continue;
    for (std::size_t j = 0; j < L; ++j) {
      if (i == j) continue;
      if (clique_of[i] >= 0 && clique_of[i] == clique_of[j]) continue;
      if (c.joint[i * L + j] == c.single[i]) out.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace

std::string label_code(int label) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "L%04d", label);
  return buf;
}

std::vector<std::string> label_keywords(const GeneratorSpec& spec, int label) {
  int owner = label;
  for (const auto& [a, b] : spec.siblings)
    if (b == label) owner = a;
  std::vector<std::string> out;
  for (std::size_t k = 0; k < spec.keywords_per_label; ++k)
    out.push_back(keyword_token(static_cast<std::size_t>(owner) * spec.keywords_per_label + k));
  return out;
}

void GeneratorSpec::validate() const {
  if (num_labels == 0) throw SpecError("generator needs at least one label");
  if (keywords_per_label == 0) throw SpecError("keywords_per_label must be positive");
  if (keywords_per_label * num_labels > vocab_size)
    throw SpecError("keywords_per_label x labels (" + std::to_string(keywords_per_label * num_labels) +
                    ") exceeds the vocabulary size " + std::to_string(vocab_size));
  if (min_length == 0 || min_length > max_length) throw SpecError("invalid document length range");
  if (max_head_draws == 0) throw SpecError("max_head_draws must be positive");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw SpecError("noise_rate must lie in [0, 1]");
  if (!(aux_noise_rate >= 0.0 && aux_noise_rate <= 1.0))
    throw SpecError("aux_noise_rate must lie in [0, 1]");
  if (!(tail_exponent >= 0.0)) throw SpecError("tail exponent must be non-negative");
  if (train_fraction <= 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0)
    throw SpecError("invalid split fractions");
  auto check_label = [&](int l) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_labels)
      throw SpecError("label " + std::to_string(l) + " outside the label range");
  };
  std::set<int> seen;
  for (const auto& c : cliques) {
    if (c.size() < 2) throw SpecError("a clique needs at least two labels");
    for (int l : c) {
      check_label(l);
      if (!seen.insert(l).second) throw SpecError("cliques must be disjoint");
    }
  }
  std::set<int> sib;
  for (const auto& [a, b] : siblings) {
    check_label(a);
    check_label(b);
    if (a == b || !sib.insert(a).second || !sib.insert(b).second)
      throw SpecError("sibling pairs must be distinct and disjoint");
  }
  for (const auto& p : aux) {
    if (!(p.emission > 0.0 && p.emission <= 1.0))
      throw SpecError("emission probability of " + p.code + " must lie in (0, 1]");
    if (p.labels.empty()) throw SpecError("aux code " + p.code + " has no labels");
    for (int l : p.labels) check_label(l);
    if (!std::is_sorted(p.labels.begin(), p.labels.end()))
      throw SpecError("aux code " + p.code + " labels must be sorted");
  }
}

GeneratorSpec planted_spec(std::size_t L, std::size_t n_docs, std::uint64_t seed) {
  GeneratorSpec s;
  s.num_labels = L;
  s.n_docs = n_docs;
  s.seed = seed;
  s.vocab_size = L * s.keywords_per_label + 1000;
  int k = 0;
  for (std::size_t start = 4; start + 3 <= L / 2; start += 10, ++k) {
    std::vector<int> c{static_cast<int>(start), static_cast<int>(start + 1)};
    if (k % 2) c.push_back(static_cast<int>(start + 2));
    s.cliques.push_back(c);
  }
  for (std::size_t i = 10; i + 9 < L; i += 10) s.siblings.emplace_back(i, i + 9);
  auto group = [](std::size_t lo, std::size_t hi) {
    std::vector<int> v;
    for (std::size_t l = lo; l < hi; ++l) v.push_back(static_cast<int>(l));
    return v;
  };
  for (std::size_t g = 0; g * 8 < L; ++g)
    s.aux.push_back({Terminology::Drg, "DRG" + std::to_string(g), group(g * 8, std::min(L, g * 8 + 8)), 1.0});
  s.aux.push_back({Terminology::Cpt, "CPT0", group(0, std::min<std::size_t>(L, 2)), 0.8});
  for (std::size_t lo = 2, g = 1; lo < L; lo += 4, ++g)
    s.aux.push_back({Terminology::Cpt, "CPT" + std::to_string(g), group(lo, std::min(L, lo + 4)), 0.8});
  for (std::size_t l = 0; l < L; ++l)
    s.aux.push_back({Terminology::Drug, "RX" + std::to_string(l), {static_cast<int>(l)}, 0.5});
  return s;
}

SyntheticCorpus generate(const GeneratorSpec& spec) {
  spec.validate();
  const Layout lay = make_layout(spec);
  const std::size_t L = spec.num_labels;

  SyntheticCorpus out;
  std::vector<Rng> rngs;
  std::vector<std::size_t> draws;
  for (std::size_t i = 0; i < spec.n_docs; ++i) {
    rngs.emplace_back(derive_seed(spec.seed, i));
    draws.push_back(1 + rngs.back().below(spec.max_head_draws));
  }
  std::vector<std::vector<int>> labels = draw_labels(spec, lay, draws);
  for (std::size_t i = 0; i < spec.n_docs; ++i) out.docs.push_back(make_doc(i, labels[i], spec, lay, rngs[i]));

  // Rejection pass: a rare label that happens to sit only on documents with
  // some unrelated label would read as a perfect co-occurrence. Replace one of
  // its documents by one carrying only that label (and its clique).
  std::size_t attempt = 0;
  for (int round = 0;; ++round) {
    const auto bad = accidental_pairs(labels, L, lay.clique_of);
    if (bad.empty()) break;
    if (round > 100) throw SpecError("rejection pass did not converge");
    std::set<int> fixed;
    for (const auto& [i, j] : bad) {
      if (!fixed.insert(i).second) continue;
      const std::vector<int> solo = closure({i}, spec, lay);
      for (std::size_t d = 0; d < labels.size(); ++d) {
        if (labels[d] == solo || !std::binary_search(labels[d].begin(), labels[d].end(), i)) continue;
        Rng rng(derive_seed(derive_seed(spec.seed, d), 0x72656a656374ULL + attempt++));
        labels[d] = solo;
        out.docs[d] = make_doc(d, solo, spec, lay, rng);
        ++out.truth.rejected;
        break;
      }
    }
  }

  std::vector<std::size_t> order(spec.n_docs);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(spec.seed, 0x73706c6974ULL));
  split_rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * spec.n_docs));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * spec.n_docs));
  out.truth.doc_split.assign(spec.n_docs, Split::Test);
  for (std::size_t k = 0; k < order.size(); ++k)
    out.truth.doc_split[order[k]] = k < n_train ? Split::Train : k < n_train + n_val ? Split::Validation : Split::Test;

  for (std::size_t l = 0; l < L; ++l) {
    std::string desc;
    for (const auto& w : label_keywords(spec, static_cast<int>(l))) desc += (desc.empty() ? "" : " ") + w;
    out.catalog_tsv += label_code(static_cast<int>(l)) + "\t" + desc + "\n";
  }
  out.truth.cliques = spec.cliques;
  out.truth.siblings = spec.siblings;
  out.truth.aux = spec.aux;
  for (std::size_t l = 0; l < L; ++l) out.truth.label_weight.push_back(std::pow(l + 1.0, -spec.tail_exponent));
  for (std::size_t i = 0; i < spec.n_docs; ++i) out.truth.doc_ids.push_back(out.docs[i].doc_id);
  out.truth.doc_labels = std::move(labels);
  return out;
}

std::vector<RawDocument> SyntheticCorpus::split(Split s) const {
  std::vector<RawDocument> out;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (truth.doc_split[i] == s) out.push_back(docs[i]);
  return out;
}

std::string GroundTruth::to_json() const {
  using nlohmann::json;
  json j;
  j["cliques"] = cliques;
  j["siblings"] = siblings;
  json aux_j = json::array();
  for (const auto& p : aux)
    aux_j.push_back({{"term", to_string(p.term)}, {"code", p.code}, {"labels", p.labels}, {"emission", p.emission}});
  j["aux"] = aux_j;
  j["label_weight"] = label_weight;
  j["doc_ids"] = doc_ids;
  j["doc_labels"] = doc_labels;
  std::vector<std::string> splits;
  for (Split s : doc_split) splits.push_back(to_string(s));
  j["doc_split"] = splits;
  j["rejected"] = rejected;
  return j.dump() + "\n";
}

GroundTruth GroundTruth::from_json(std::string_view text) {
  using nlohmann::json;
  GroundTruth g;
  try {
    const json j = json::parse(text);
    g.cliques = j.at("cliques").get<std::vector<std::vector<int>>>();
    g.siblings = j.at("siblings").get<std::vector<std::pair<int, int>>>();
    for (const auto& a : j.at("aux")) {
      AuxPlant p;
      const std::string t = a.at("term").get<std::string>();
      if (t == "drg") p.term = Terminology::Drg;
      else if (t == "cpt") p.term = Terminology::Cpt;
      else if (t == "drugs") p.term = Terminology::Drug;
      else throw FormatError("bad ground-truth file: unknown terminology " + t);
      p.code = a.at("code").get<std::string>();
      p.labels = a.at("labels").get<std::vector<int>>();
      p.emission = a.at("emission").get<double>();
      g.aux.push_back(std::move(p));
    }
    g.label_weight = j.at("label_weight").get<std::vector<double>>();
    g.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    g.doc_labels = j.at("doc_labels").get<std::vector<std::vector<int>>>();
    for (const auto& s : j.at("doc_split").get<std::vector<std::string>>())
      g.doc_split.push_back(s == "train" ? Split::Train : s == "validation" ? Split::Validation : Split::Test);
    g.rejected = j.at("rejected").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad ground-truth file: ") + e.what());
  }
  return g;
}

AuditReport verify(const std::vector<RawDocument>& docs, const GroundTruth& truth) {
  AuditReport rep;
  const std::size_t L = truth.label_weight.size();
  std::map<std::string, int> code_to_label;
  for (std::size_t l = 0; l < L; ++l) code_to_label[label_code(static_cast<int>(l))] = static_cast<int>(l);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < truth.doc_ids.size(); ++i) index[truth.doc_ids[i]] = i;
  std::vector<int> clique_of(L, -1);
  for (std::size_t c = 0; c < truth.cliques.size(); ++c)
    for (int l : truth.cliques[c]) clique_of[l] = static_cast<int>(c);

  std::vector<std::vector<int>> doc_labels;
  std::vector<std::size_t> plant_docs(truth.aux.size(), 0), plant_hits(truth.aux.size(), 0);
  for (const auto& d : docs) {
    bool flag = false;
    std::set<int> ids;
    for (const auto& code : d.labels) {
      const auto it = code_to_label.find(code);
      if (it == code_to_label.end()) flag = true;
      else ids.insert(it->second);
    }
    const std::vector<int> labels(ids.begin(), ids.end());
    const auto at = index.find(d.doc_id);
    if (at == index.end() || truth.doc_labels[at->second] != labels) flag = true;
    for (const auto& c : truth.cliques) {
      const auto present = std::count_if(c.begin(), c.end(), [&](int l) { return ids.count(l) > 0; });
      if (present != 0 && static_cast<std::size_t>(present) != c.size()) flag = true;
    }
    for (std::size_t p = 0; p < truth.aux.size(); ++p) {
      const auto& plant = truth.aux[p];
      const bool relevant = std::any_of(plant.labels.begin(), plant.labels.end(), [&](int l) { return ids.count(l) > 0; });
      const auto& codes = d.aux.of(plant.term);
      const bool emitted = std::find(codes.begin(), codes.end(), plant.code) != codes.end();
      if (emitted && !relevant) flag = true;
      plant_docs[p] += relevant;
      plant_hits[p] += relevant && emitted;
    }
    if (flag) rep.flagged_docs.push_back(d.doc_id);
    doc_labels.push_back(labels);
  }

  for (std::size_t p = 0; p < truth.aux.size(); ++p) {
    const double n = static_cast<double>(plant_docs[p]);
    if (n < 30) continue;
    const double e = truth.aux[p].emission;
    const double tol = 4.0 * std::sqrt(e * (1.0 - e) / n) + 0.02;
    const double got = plant_hits[p] / n;
    if (std::abs(got - e) > tol)
      rep.issues.push_back("emission of " + truth.aux[p].code + " is " + format_double(got) + ", planted " +
                           format_double(e));
  }
  for (const auto& [i, j] : accidental_pairs(doc_labels, L, clique_of))
    rep.issues.push_back("label " + std::to_string(i) + " always co-occurs with unrelated label " + std::to_string(j));
  return rep;
}

}  // namespace xmlc
