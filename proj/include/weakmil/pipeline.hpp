#pragma once

#include <optional>
#include <string>
#include <vector>

#include "weakmil/core.hpp"
#include "weakmil/energy.hpp"
#include "weakmil/eval.hpp"
#include "weakmil/optim.hpp"
#include "weakmil/synth.hpp"

namespace weakmil {

// Command-level plumbing shared by the CLI, the bindings and the
// acceptance suite. Every command validates its inputs before writing.

// Parses a generator config JSON ({"version":1, "seed":..., "splits":[...]}).
GeneratorConfig generator_config_from_json(const std::string& json_text);
GeneratorConfig load_generator_config(const std::string& path);

// Feature file belonging to a manifest entry: <features_dir>/<stem>.wmil.
std::string feature_path_for(const std::string& features_dir, const ManifestEntry& entry);

// One split's feature bags joined with their manifest ground truth.
struct DatasetBags {
  std::vector<FeatureBag> bags;
  std::vector<std::string> ids;
  std::vector<int> weak_labels;  // video-level label copied to each bag
  std::vector<int> gt_labels;    // event-overlap truth (label-0 bags stay 0)
  std::vector<std::vector<CorruptionKind>> kinds;
};

DatasetBags load_split_features(const DatasetManifest& manifest, const std::string& features_dir,
                                const std::string& split, int seg_len = 16);

// synth: config -> videos + manifest under out_dir.
DatasetManifest run_synth(const GeneratorConfig& config, const std::string& out_dir);

// features: one WMIL file per manifest entry under out_dir. With import_from
// set, external per-video feature files are validated and re-emitted instead
// of running the built-in extractor.
struct FeaturesOptions {
  int bag_len = 512;
  int seg_len = 16;
  std::optional<std::string> import_from;
};
void run_features(const DatasetManifest& manifest, const std::string& out_dir,
                  const FeaturesOptions& options = {});

// train: writes <out_dir>/model.wmck and <out_dir>/train_log.csv.
struct TrainOutputs {
  TrainResult result;
  std::string checkpoint_path;
  std::string log_path;
};
TrainOutputs run_train(const DatasetManifest& manifest, const std::string& features_dir,
                       const TrainConfig& config, const std::string& out_dir,
                       const std::string& train_split = "train",
                       const std::string& val_split = "validation");

// Scores every bag of a split with a model.
ScoreTable score_split(const MilModel& model, const DatasetBags& bags);

// tune: threshold over the clean units of a split (label-0 bags, or their
// segments at segment granularity).
ThresholdResult run_tune(const MilModel& model, const DatasetBags& bags, double target_fpr,
                         const std::string& granularity = "bag");

// tune over a directory of feature files that are all known clean.
ThresholdResult run_tune_clean_dir(const MilModel& model, const std::string& clean_dir,
                                   double target_fpr, const std::string& granularity = "bag");

std::string threshold_report_json(const ThresholdResult& result);

// eval: metrics.csv + roc.csv for a scored split at a fixed threshold.
struct EvalOutputs {
  ConfusionResult confusion;
  RocResult roc;
  std::vector<KindRecall> per_kind;
};
EvalOutputs run_eval(const ScoreTable& table, double threshold, const ThresholdResult& tuning,
                     const std::string& model_name, const std::string& out_dir);

// baseline energy: scores a split's videos, tunes on its clean bags and
// writes the same outputs tagged model=energy.
struct EnergyEvalResult {
  ScoreTable table;
  ThresholdResult threshold;
  EvalOutputs outputs;
};
EnergyEvalResult run_energy_baseline(const DatasetManifest& manifest, const std::string& split,
                                     const EnergyConfig& config, double target_fpr,
                                     const std::string& out_dir, int bag_len = 512);

}  // namespace weakmil
