#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xmlc/autodiff.hpp"
#include "xmlc/corpus.hpp"

namespace xmlc {

inline constexpr double kDefaultTau = 0.005;

// Auxiliary code -> candidate labels. Stores the full conditional table
// P(label | code) so tau can be changed without recounting.
class AuxMaskIndex {
 public:
  struct Entry {
    int label;
    double prob;
    std::uint64_t joint;  // 0 when loaded from file
  };
  struct CodeTable {
    std::uint64_t docs = 0;      // C_M; 0 when loaded from file
    std::vector<Entry> entries;  // sorted by label, prob > 0
    std::vector<int> candidates; // labels with prob > tau
  };

  AuxMaskIndex() = default;
  AuxMaskIndex(std::size_t num_labels, double tau);

  std::size_t num_labels() const { return num_labels_; }
  double tau(Terminology t) const { return tau_[static_cast<std::size_t>(t)]; }
  void set_tau(double tau);
  void set_tau(Terminology t, double tau);

  // nullptr for codes never seen in training.
  const CodeTable* find(Terminology t, const std::string& code) const;
  const std::map<std::string, CodeTable>& table(Terminology t) const {
    return tables_[static_cast<std::size_t>(t)];
  }
  std::map<std::string, CodeTable>& table(Terminology t) {
    return tables_[static_cast<std::size_t>(t)];
  }
  void refresh_candidates();

  std::string config_hash;

 private:
  std::size_t num_labels_ = 0;
  std::array<double, kNumTerminologies> tau_{kDefaultTau, kDefaultTau, kDefaultTau};
  std::array<std::map<std::string, CodeTable>, kNumTerminologies> tables_;
};

// Training split only (LeakageError otherwise).
AuxMaskIndex build_mask_index(std::span<const DocumentRecord> train_docs, std::size_t num_labels,
                              double tau);

struct DocMask {
  std::vector<int> labels;         // T, sorted
  std::vector<double> indicator;   // T_vec, length L
  std::vector<std::string> unseen; // "terminology:code" skipped at lookup
  bool empty() const { return labels.empty(); }
};

DocMask make_doc_mask(const AuxCodes& aux, const AuxMaskIndex& index);
// Every label admitted; used by the no-mask variant.
DocMask full_mask(std::size_t num_labels);

// Row k of H zeroed when indicator[k] == 0.
Var apply_mask(Var h_label, std::span<const double> indicator);

struct MaskStats {
  double recall = 0.0;
  double mean_mask_size = 0.0;
  double mask_fraction = 0.0;
  std::size_t gold_pairs = 0;
  std::size_t docs = 0;
};
MaskStats mask_stats(const AuxMaskIndex& index, std::span<const DocumentRecord> docs);

// "# xmlc-mask v1 config=<hash>", then per terminology a "[name]" line and
// "code<TAB>label<TAB>prob" rows. tau is not stored.
std::string serialize_mask_index(const AuxMaskIndex& index);
AuxMaskIndex parse_mask_index(std::string_view contents, double tau);

}  // namespace xmlc
