#include "xmlc/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/util.hpp"

namespace xmlc {

double auc_score(std::span<const double> scores, std::span<const char> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Rank-sum form of pair counting: tied groups share their mean rank.
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        pos_rank_sum += mean_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw EvaluationError("AUC needs both positives and negatives");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

std::vector<int> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<int> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](int a, int b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  ids.resize(k);
  return ids;
}

MetricsReport compute_metrics(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::vector<int>>& gold, double threshold,
                              std::span<const int> ks) {
  if (scores.size() != gold.size())
    throw DimensionError("metrics: " + std::to_string(scores.size()) + " score rows for " +
                         std::to_string(gold.size()) + " documents");
  const std::size_t D = scores.size();
  const std::size_t L = D ? scores[0].size() : 0;
  std::vector<std::vector<char>> truth(D, std::vector<char>(L, 0));
  std::size_t total_gold = 0;
  for (std::size_t d = 0; d < D; ++d) {
    if (scores[d].size() != L) throw DimensionError("metrics: ragged score matrix");
    for (int l : gold[d]) {
      if (l < 0 || static_cast<std::size_t>(l) >= L) throw IndexError("gold label out of range", l);
      if (!truth[d][l]) ++total_gold;
      truth[d][l] = 1;
    }
  }
  if (total_gold == 0) throw EvaluationError("no gold labels in the evaluation documents");

  MetricsReport r;
  r.docs = D;
  r.labels = L;
  r.per_label.resize(L);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t l = 0; l < L; ++l) {
    LabelMetrics& m = r.per_label[l];
    m.label = static_cast<int>(l);
    for (std::size_t d = 0; d < D; ++d) {
      const bool pred = scores[d][l] >= threshold;
      const bool t = truth[d][l];
      m.positives += t;
      m.tp += pred && t;
      m.fp += pred && !t;
      m.fn += !pred && t;
    }
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
    const std::size_t denom = 2 * m.tp + m.fp + m.fn;
    m.f1 = denom ? 2.0 * m.tp / denom : 0.0;
  }
  r.micro_f1 = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);

  double f1_sum = 0.0, auc_sum = 0.0;
  std::size_t f1_n = 0, auc_n = 0;
  std::vector<double> col(D);
  std::vector<char> col_truth(D);
  for (std::size_t l = 0; l < L; ++l) {
    LabelMetrics& m = r.per_label[l];
    if (m.positives == 0) {
      ++r.macro_f1_skipped;
    } else {
      f1_sum += m.f1;
      ++f1_n;
    }
    if (m.positives == 0 || m.positives == D) {
      ++r.macro_auc_skipped;
      continue;
    }
    for (std::size_t d = 0; d < D; ++d) {
      col[d] = scores[d][l];
      col_truth[d] = truth[d][l];
    }
    m.auc = auc_score(col, col_truth);
    auc_sum += m.auc;
    ++auc_n;
  }
  r.macro_f1 = f1_n ? f1_sum / f1_n : 0.0;
  r.macro_auc = auc_n ? auc_sum / auc_n : 0.0;

  std::vector<double> flat;
  std::vector<char> flat_truth;
  flat.reserve(D * L);
  flat_truth.reserve(D * L);
  for (std::size_t d = 0; d < D; ++d) {
    flat.insert(flat.end(), scores[d].begin(), scores[d].end());
    flat_truth.insert(flat_truth.end(), truth[d].begin(), truth[d].end());
  }
  r.micro_auc = total_gold < D * L ? auc_score(flat, flat_truth) : 0.0;

  for (int k : ks) {
    if (k <= 0) throw ArgumentError("P@K needs K >= 1, got " + std::to_string(k));
    double sum = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      std::size_t hits = 0;
      for (int l : top_k(scores[d], static_cast<std::size_t>(k))) hits += truth[d][l];
      sum += static_cast<double>(hits) / k;
    }
    r.p_at_k[k] = sum / static_cast<double>(D);
  }
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["micro_f1"] = micro_f1;
  j["macro_f1"] = macro_f1;
  j["micro_auc"] = micro_auc;
  j["macro_auc"] = macro_auc;
  for (const auto& [k, v] : p_at_k) j["p_at_" + std::to_string(k)] = v;
  j["docs"] = docs;
  j["labels"] = labels;
  j["macro_f1_skipped_labels"] = macro_f1_skipped;
  j["macro_auc_skipped_labels"] = macro_auc_skipped;
  return j.dump(2) + "\n";
}

std::string MetricsReport::per_label_tsv() const {
  std::string out = "label\tpositives\ttp\tfp\tfn\tf1\tauc\n";
  for (const auto& m : per_label) {
    out += std::to_string(m.label) + "\t" + std::to_string(m.positives) + "\t" +
           std::to_string(m.tp) + "\t" + std::to_string(m.fp) + "\t" + std::to_string(m.fn) + "\t" +
           format_double(m.f1) + "\t" + (m.auc < 0 ? std::string("nan") : format_double(m.auc)) + "\n";
  }
  return out;
}

}  // namespace xmlc
