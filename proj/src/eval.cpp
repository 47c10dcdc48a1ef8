#include "weakmil/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "weakmil/common.hpp"

namespace weakmil {

double bag_score(const Vec& segment_scores) {
  if (segment_scores.empty()) {
    throw DataError("empty-input error: bag has no segment scores");
  }
  return *std::max_element(segment_scores.begin(), segment_scores.end());
}

ThresholdResult tune_threshold(Vec clean_scores, double target_fpr,
                               const std::string& granularity) {
  if (clean_scores.empty()) {
    throw DataError("empty-input error: threshold tuning needs clean scores");
  }
  if (target_fpr < 0.0 || target_fpr > 1.0) {
    throw ConfigError("configuration error: target FPR must lie in [0, 1]");
  }
  std::sort(clean_scores.begin(), clean_scores.end());
  const size_t n = clean_scores.size();

  ThresholdResult result;
  result.target_fpr = target_fpr;
  result.granularity = granularity;
  result.n_clean = n;

  // Candidates ascending; FP(t) = #scores strictly above t is non-increasing
  // in t, so the first feasible candidate is the smallest (recall-maximizing)
  // one. The largest candidate always counts zero false positives.
  for (size_t i = 0; i < n; ++i) {
    if (i > 0 && clean_scores[i] == clean_scores[i - 1]) continue;
    const double t = clean_scores[i];
    const size_t fp =
        n - static_cast<size_t>(std::upper_bound(clean_scores.begin(), clean_scores.end(), t) -
                                clean_scores.begin());
    if (static_cast<double>(fp) / static_cast<double>(n) <= target_fpr) {
      result.threshold = t;
      result.false_positives = fp;
      result.achieved_fpr = static_cast<double>(fp) / static_cast<double>(n);
      return result;
    }
  }
  // Unreachable: the maximum is always feasible. Kept as a defined fallback.
  result.threshold = clean_scores.back();
  result.false_positives = 0;
  result.achieved_fpr = 0.0;
  return result;
}

ConfusionResult recall_at_fpr(const ScoreTable& table, double threshold) {
  size_t n_pos = 0;
  for (const ScoreRow& row : table) n_pos += row.label == 1;
  if (n_pos == 0) {
    throw DataError("undefined-metric error: no corrupted bags in the score table");
  }
  ConfusionResult result;
  for (const ScoreRow& row : table) {
    const bool flagged = row.bag_score > threshold;
    if (row.label == 1) {
      if (flagged) {
        ++result.tp;
        result.tp_ids.push_back(row.bag_id);
      } else {
        ++result.fn;
      }
    } else {
      if (flagged) {
        ++result.fp;
      } else {
        ++result.tn;
        result.tn_ids.push_back(row.bag_id);
      }
    }
  }
  result.recall = static_cast<double>(result.tp) / static_cast<double>(n_pos);
  return result;
}

RocResult roc_auc(const Vec& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw DataError("shape error: scores and labels differ in length");
  }
  size_t n_pos = 0, n_neg = 0;
  for (int label : labels) (label == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("single-class input: ROC needs both labels present");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("numeric error: non-finite score in ROC input");
  }

  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocResult result;
  size_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    // Point at threshold s uses strict >, i.e. counts accumulated so far.
    result.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                             static_cast<double>(tp) / static_cast<double>(n_pos), s});
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
  }
  result.points.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});

  double auc = 0.0;
  for (size_t p = 1; p < result.points.size(); ++p) {
    const RocPoint& a = result.points[p - 1];
    const RocPoint& b = result.points[p];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  result.auc = auc;
  return result;
}

RocResult roc_auc(const ScoreTable& table) {
  Vec scores;
  std::vector<int> labels;
  scores.reserve(table.size());
  labels.reserve(table.size());
  for (const ScoreRow& row : table) {
    scores.push_back(row.bag_score);
    labels.push_back(row.label);
  }
  return roc_auc(scores, labels);
}

std::vector<KindRecall> per_kind_report(const ScoreTable& table, double threshold) {
  std::map<CorruptionKind, KindRecall> by_kind;
  for (const ScoreRow& row : table) {
    if (row.kinds.empty()) continue;
    std::vector<CorruptionKind> unique = row.kinds;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (CorruptionKind kind : unique) {
      KindRecall& entry = by_kind[kind];
      entry.kind = kind;
      entry.bags += 1;
      entry.detected += row.bag_score > threshold;
    }
  }
  std::vector<KindRecall> report;
  report.reserve(by_kind.size());
  for (auto& [kind, entry] : by_kind) {
    entry.recall = static_cast<double>(entry.detected) / static_cast<double>(entry.bags);
    report.push_back(entry);
  }
  return report;
}

void write_metrics_csv(const std::string& path, const std::string& model_name,
                       const ConfusionResult& confusion, const RocResult& roc,
                       const ThresholdResult& threshold,
                       const std::vector<KindRecall>& per_kind) {
  std::string out = "metric,name,value\n";
  out += "model,," + model_name + "\n";
  out += "auc,," + fmt_g17(roc.auc) + "\n";
  out += "recall_at_fpr,," + fmt_g17(confusion.recall) + "\n";
  out += "threshold,," + fmt_g17(threshold.threshold) + "\n";
  out += "target_fpr,," + fmt_g17(threshold.target_fpr) + "\n";
  out += "achieved_fpr,," + fmt_g17(threshold.achieved_fpr) + "\n";
  out += "tune_granularity,," + threshold.granularity + "\n";
  out += "clean_units,," + std::to_string(threshold.n_clean) + "\n";
  out += "tp,," + std::to_string(confusion.tp) + "\n";
  out += "fp,," + std::to_string(confusion.fp) + "\n";
  out += "tn,," + std::to_string(confusion.tn) + "\n";
  out += "fn,," + std::to_string(confusion.fn) + "\n";
  for (const KindRecall& entry : per_kind) {
    out += std::string("per_kind_recall,") + to_string(entry.kind) + "," + fmt_g17(entry.recall) + "\n";
    out += std::string("per_kind_bags,") + to_string(entry.kind) + "," + std::to_string(entry.bags) + "\n";
  }
  write_file(path, out);
}

void write_roc_csv(const std::string& path, const RocResult& roc) {
  std::string out = "fpr,tpr,threshold\n";
  for (const RocPoint& p : roc.points) {
    out += fmt_g17(p.fpr) + "," + fmt_g17(p.tpr) + "," + fmt_g17(p.threshold) + "\n";
  }
  write_file(path, out);
}

}  // namespace weakmil
