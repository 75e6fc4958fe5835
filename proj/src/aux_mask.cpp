#include "xmlc/aux_mask.hpp"

#include <algorithm>
#include <set>

#include "xmlc/errors.hpp"
#include "xmlc/ops.hpp"
#include "xmlc/util.hpp"

namespace xmlc {
namespace {

constexpr Terminology kTerms[] = {Terminology::Drg, Terminology::Cpt, Terminology::Drug};

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ArgumentError("tau must lie in [0, 1]");
}

}  // namespace

AuxMaskIndex::AuxMaskIndex(std::size_t num_labels, double tau) : num_labels_(num_labels) {
  set_tau(tau);
}

void AuxMaskIndex::set_tau(double tau) {
  check_tau(tau);
  tau_.fill(tau);
  refresh_candidates();
}

void AuxMaskIndex::set_tau(Terminology t, double tau) {
  check_tau(tau);
  tau_[static_cast<std::size_t>(t)] = tau;
  refresh_candidates();
}

const AuxMaskIndex::CodeTable* AuxMaskIndex::find(Terminology t, const std::string& code) const {
  const auto& tab = table(t);
  const auto it = tab.find(code);
  return it == tab.end() ? nullptr : &it->second;
}

void AuxMaskIndex::refresh_candidates() {
  for (Terminology t : kTerms) {
    const double cut = tau(t);
    for (auto& [code, ct] : table(t)) {
      ct.candidates.clear();
      for (const auto& e : ct.entries)
        if (e.prob > cut) ct.candidates.push_back(e.label);
    }
  }
}

AuxMaskIndex build_mask_index(std::span<const DocumentRecord> train_docs, std::size_t num_labels,
                              double tau) {
  for (const auto& d : train_docs) {
    if (d.split != Split::Train) {
      throw LeakageError("mask index may only read training documents; got " + d.doc_id +
                         " from the " + to_string(d.split) + " split");
    }
  }
  AuxMaskIndex index(num_labels, tau);
  for (Terminology t : kTerms) {
    std::map<std::string, std::map<int, std::uint64_t>> joint;
    std::map<std::string, std::uint64_t> docs;
    for (const auto& d : train_docs) {
      // a code listed twice on one document still counts once
      std::set<std::string> codes(d.aux.of(t).begin(), d.aux.of(t).end());
      for (const auto& code : codes) {
        ++docs[code];
        auto& row = joint[code];
        for (int l : d.labels) {
          if (l < 0 || static_cast<std::size_t>(l) >= num_labels)
            throw IngestionError("document " + d.doc_id + " has label id " + std::to_string(l) +
                                 " outside the catalog");
          ++row[l];
        }
      }
    }
    auto& tab = index.table(t);
    for (const auto& [code, n] : docs) {
      AuxMaskIndex::CodeTable ct;
      ct.docs = n;
      for (const auto& [label, c] : joint[code])
        ct.entries.push_back({label, static_cast<double>(c) / static_cast<double>(n), c});
      tab.emplace(code, std::move(ct));
    }
  }
  index.refresh_candidates();
  return index;
}

DocMask make_doc_mask(const AuxCodes& aux, const AuxMaskIndex& index) {
  DocMask m;
  m.indicator.assign(index.num_labels(), 0.0);
  std::set<int> labels;
  for (Terminology t : kTerms) {
    for (const auto& code : aux.of(t)) {
      const auto* ct = index.find(t, code);
      if (!ct) {
        m.unseen.push_back(std::string(to_string(t)) + ":" + code);
        continue;
      }
      labels.insert(ct->candidates.begin(), ct->candidates.end());
    }
  }
  m.labels.assign(labels.begin(), labels.end());
  for (int l : m.labels) m.indicator[l] = 1.0;
  return m;
}

DocMask full_mask(std::size_t num_labels) {
  DocMask m;
  m.indicator.assign(num_labels, 1.0);
  m.labels.resize(num_labels);
  for (std::size_t i = 0; i < num_labels; ++i) m.labels[i] = static_cast<int>(i);
  return m;
}

Var apply_mask(Var h_label, std::span<const double> indicator) {
  if (h_label.shape().size() != 2 || h_label.shape()[0] != indicator.size()) {
    throw DimensionError("mask of length " + std::to_string(indicator.size()) +
                         " does not match label matrix " + to_string(h_label.shape()));
  }
  Tensor v({indicator.size()}, std::vector<double>(indicator.begin(), indicator.end()));
  return ops::broadcast_mul(h_label, h_label.tape().constant(std::move(v)));
}

MaskStats mask_stats(const AuxMaskIndex& index, std::span<const DocumentRecord> docs) {
  MaskStats s;
  std::size_t hit = 0, size_sum = 0;
  for (const auto& d : docs) {
    const DocMask m = make_doc_mask(d.aux, index);
    size_sum += m.labels.size();
    for (int l : d.labels) {
      ++s.gold_pairs;
      if (std::binary_search(m.labels.begin(), m.labels.end(), l)) ++hit;
    }
  }
  s.docs = docs.size();
  s.recall = s.gold_pairs ? static_cast<double>(hit) / static_cast<double>(s.gold_pairs) : 0.0;
  s.mean_mask_size = docs.empty() ? 0.0 : static_cast<double>(size_sum) / docs.size();
  s.mask_fraction = index.num_labels() ? s.mean_mask_size / index.num_labels() : 0.0;
  return s;
}

std::string serialize_mask_index(const AuxMaskIndex& index) {
  std::string out = "# xmlc-mask v1 config=" + index.config_hash +
                    " labels=" + std::to_string(index.num_labels()) + "\n";
  for (Terminology t : kTerms) {
    out += std::string("[") + to_string(t) + "]\n";
    for (const auto& [code, ct] : index.table(t))
      for (const auto& e : ct.entries)
        out += code + "\t" + std::to_string(e.label) + "\t" + format_double(e.prob) + "\n";
  }
  return out;
}

AuxMaskIndex parse_mask_index(std::string_view contents, double tau) {
  const auto lines = split(contents, '\n');
  if (lines.empty() || lines[0].rfind("# xmlc-mask v1", 0) != 0)
    throw FormatError("not a mask index file", 1);
  std::string hash;
  std::size_t labels = 0;
  {
    const auto& h = lines[0];
    const auto c = h.find("config=");
    const auto l = h.find("labels=");
    if (c == std::string::npos || l == std::string::npos)
      throw FormatError("mask header needs config= and labels=", 1);
    hash = h.substr(c + 7, h.find(' ', c) - (c + 7));
    try {
      labels = std::stoull(h.substr(l + 7));
    } catch (const std::exception&) {
      throw FormatError("bad label count in mask header", 1);
    }
  }
  AuxMaskIndex index(labels, tau);
  index.config_hash = hash;
  std::map<std::string, AuxMaskIndex::CodeTable>* tab = nullptr;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string line = trim(lines[n]);
    if (line.empty()) continue;
    if (line.front() == '[') {
      tab = nullptr;
      for (Terminology t : kTerms)
        if (line == std::string("[") + to_string(t) + "]") tab = &index.table(t);
      if (!tab) throw FormatError("unknown terminology section " + line, n + 1);
      continue;
    }
    if (!tab) throw FormatError("entry before any terminology section", n + 1);
    const auto f = split(line, '\t');
    if (f.size() != 3) throw FormatError("mask line needs code<TAB>label<TAB>prob", n + 1);
    AuxMaskIndex::Entry e{};
    try {
      e.label = std::stoi(f[1]);
      e.prob = std::stod(f[2]);
    } catch (const std::exception&) {
      throw FormatError("non-numeric label or probability", n + 1);
    }
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= labels)
      throw FormatError("label id out of range", n + 1);
    if (!(e.prob >= 0.0 && e.prob <= 1.0)) throw FormatError("probability outside [0, 1]", n + 1);
    (*tab)[f[0]].entries.push_back(e);
  }
  for (Terminology t : kTerms)
    for (auto& [code, ct] : index.table(t))
      std::sort(ct.entries.begin(), ct.entries.end(),
                [](const auto& a, const auto& b) { return a.label < b.label; });
  index.refresh_candidates();
  return index;
}

}  // namespace xmlc
