#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace xmlc {

inline const std::vector<int> kDefaultKs{5, 8, 15};

struct LabelMetrics {
  int label = 0;
  std::size_t positives = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double f1 = 0.0;
  double auc = -1.0;  // -1 when the label lacks either class
};

struct MetricsReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double micro_auc = 0.0;
  double macro_auc = 0.0;
  std::map<int, double> p_at_k;
  std::size_t docs = 0;
  std::size_t labels = 0;
  std::size_t macro_f1_skipped = 0;   // labels with no positives
  std::size_t macro_auc_skipped = 0;  // labels lacking positives or negatives
  std::vector<LabelMetrics> per_label;

  std::string to_json() const;
  // label, positives, tp, fp, fn, f1, auc
  std::string per_label_tsv() const;
};

// scores[d][l] are final (gated) probabilities; gold[d] are label ids.
// F1 uses scores >= threshold; AUC and P@K use the scores directly.
// Throws EvaluationError when no document has a gold label.
MetricsReport compute_metrics(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<int>>& gold, double threshold,
                              std::span<const int> ks = kDefaultKs);

// Exact Mann-Whitney AUC with ties counted one half.
double auc_score(std::span<const double> scores, std::span<const char> positive);

// Labels sorted by descending score, ties by ascending id; first k kept.
std::vector<int> top_k(std::span<const double> scores, std::size_t k);

}  // namespace xmlc
