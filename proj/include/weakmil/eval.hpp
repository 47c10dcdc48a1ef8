#pragma once

#include <string>
#include <vector>

#include "weakmil/core.hpp"
#include "weakmil/model.hpp"

namespace weakmil {

// One scored bag. label is ground truth (from synthetic event annotations)
// when available, else the weak label.
struct ScoreRow {
  std::string bag_id;
  int label = 0;
  double bag_score = 0.0;
  Vec segment_scores;
  std::vector<CorruptionKind> kinds;  // kinds present in the bag, if known
};

using ScoreTable = std::vector<ScoreRow>;

// Bag aggregation: the maximum segment score.
double bag_score(const Vec& segment_scores);

struct ThresholdResult {
  double threshold = 0.0;
  double achieved_fpr = 0.0;
  double target_fpr = 0.0;
  std::string granularity = "bag";
  size_t n_clean = 0;
  size_t false_positives = 0;
};

// Candidate thresholds are the distinct observed clean scores;
// FP(t) counts clean units with score strictly above t. Returns the
// smallest candidate with FP(t)/N <= target_fpr (the recall-maximizing
// feasible choice; the largest candidate is always feasible).
ThresholdResult tune_threshold(Vec clean_scores, double target_fpr = 0.001,
                               const std::string& granularity = "bag");

struct ConfusionResult {
  double recall = 0.0;
  size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<std::string> tp_ids;
  std::vector<std::string> tn_ids;
};

// A bag is flagged iff bag_score > t (strict). Recall over label-1 bags;
// throws DataError when no label-1 bag exists.
ConfusionResult recall_at_fpr(const ScoreTable& table, double threshold);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// Sweeps all distinct scores as strict thresholds plus the (1,1) endpoint;
// AUC by the trapezoidal rule (equals the Mann-Whitney statistic with half
// credit for ties). Requires both labels present.
RocResult roc_auc(const Vec& scores, const std::vector<int>& labels);
RocResult roc_auc(const ScoreTable& table);

struct KindRecall {
  CorruptionKind kind = CorruptionKind::GreenFlash;
  size_t bags = 0;
  size_t detected = 0;
  double recall = 0.0;
};

// Recall within each corruption kind; a bag counts toward every kind it
// contains. Kinds with zero bags are absent from the report.
std::vector<KindRecall> per_kind_report(const ScoreTable& table, double threshold);

// ---- plot-ready CSV outputs ----

// metrics.csv rows are metric,name,value. Includes recall_at_fpr, auc,
// threshold, achieved_fpr, tp/fp/tn/fn counts and per-kind recalls.
void write_metrics_csv(const std::string& path, const std::string& model_name,
                       const ConfusionResult& confusion, const RocResult& roc,
                       const ThresholdResult& threshold,
                       const std::vector<KindRecall>& per_kind);

// roc.csv rows are fpr,tpr,threshold.
void write_roc_csv(const std::string& path, const RocResult& roc);

}  // namespace weakmil
