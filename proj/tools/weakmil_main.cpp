// weakmil CLI: synthetic dataset generation, feature extraction, MIL
// training, FPR-constrained threshold tuning, evaluation and the energy
// baseline. Exit codes: 0 success, 2 configuration error, 3 data/format
// error, 4 numeric divergence.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "weakmil/pipeline.hpp"

namespace {

using namespace weakmil;

struct SynthArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed_override;
};

struct FeaturesArgs {
  std::string manifest_path;
  std::string out_dir;
  std::string extractor = "builtin";
  std::string import_from;
  int bag_len = 512;
  int seg_len = 16;
};

struct TrainArgs {
  std::string features_dir;
  std::string manifest_path;
  std::string model = "deep-mil";
  std::string out_dir;
  std::string train_split = "train";
  std::string val_split = "validation";
  uint64_t seed = 0;
  int epochs = 30;
  std::string optimizer;  // empty = model default
  double lr = -1.0;       // <0 = optimizer default
  double lambda = 1e-3;
  double dropout = 0.6;
  int batch = 30;
  int attention_dim = 16;
  std::vector<int> hidden = {512, 32};
  std::string metric = "val_auc";
  double target_fpr = 0.001;
};

struct TuneArgs {
  std::string checkpoint;
  std::string clean_dir;
  std::string features_dir;
  std::string manifest_path;
  std::string split = "test";
  double target_fpr = 0.001;
  std::string granularity = "bag";
  std::string out_path;
  int seg_len = 16;
};

struct EvalArgs {
  std::string checkpoint;
  double threshold = 0.5;
  std::string features_dir;
  std::string manifest_path;
  std::string split = "test";
  std::string out_dir = ".";
  double target_fpr = 0.001;
  int seg_len = 16;
};

struct EnergyArgs {
  std::string manifest_path;
  std::string split = "test";
  bool normalize = false;
  double target_fpr = 0.001;
  int k = 3;
  int patch = 32;
  int window = 3;
  int bag_len = 512;
  std::string out_dir = ".";
};

int do_synth(const SynthArgs& args) {
  GeneratorConfig config = load_generator_config(args.config_path);
  if (args.seed_override) config.seed = *args.seed_override;
  const DatasetManifest manifest = run_synth(config, args.out_dir);
  std::cout << "wrote " << manifest.videos.size() << " videos and "
            << args.out_dir + "/manifest.json" << "\n";
  return 0;
}

int do_features(const FeaturesArgs& args) {
  if (args.extractor != "builtin" && args.extractor != "import") {
    throw ConfigError("configuration error: --extractor must be builtin or import");
  }
  if (args.extractor == "import" && args.import_from.empty()) {
    throw ConfigError("configuration error: --extractor import requires --from");
  }
  const DatasetManifest manifest = DatasetManifest::load(args.manifest_path);
  FeaturesOptions options;
  options.bag_len = args.bag_len;
  options.seg_len = args.seg_len;
  if (args.extractor == "import") options.import_from = args.import_from;
  run_features(manifest, args.out_dir, options);
  std::cout << "wrote features for " << manifest.videos.size() << " videos to " << args.out_dir
            << "\n";
  return 0;
}

int do_train(const TrainArgs& args) {
  const DatasetManifest manifest = DatasetManifest::load(args.manifest_path);
  TrainConfig config = TrainConfig::for_model(model_kind_from_string(args.model));
  if (!args.optimizer.empty()) config.optimizer = optimizer_from_string(args.optimizer);
  if (args.lr >= 0.0) {
    config.lr = args.lr;
  } else if (config.optimizer == OptimizerKind::Adam) {
    config.lr = 1e-3;
  } else {
    config.lr = 0.1;
  }
  config.epochs = args.epochs;
  config.seed = args.seed;
  config.lambda = args.lambda;
  config.dropout = args.dropout;
  config.batch_corrupted = args.batch;
  config.batch_normal = args.batch;
  config.attention_dim = args.attention_dim;
  config.hidden = args.hidden;
  config.selection_metric = args.metric;
  config.target_fpr = args.target_fpr;

  const TrainOutputs outputs =
      run_train(manifest, args.features_dir, config, args.out_dir, args.train_split, args.val_split);
  std::cout << "best epoch " << outputs.result.best_epoch << " ("
            << config.selection_metric << " " << outputs.result.best_metric << "); wrote "
            << outputs.checkpoint_path << "\n";
  return 0;
}

int do_tune(const TuneArgs& args) {
  const MilModel model = load_checkpoint(args.checkpoint);
  ThresholdResult result;
  if (!args.clean_dir.empty()) {
    result = run_tune_clean_dir(model, args.clean_dir, args.target_fpr, args.granularity);
  } else {
    if (args.features_dir.empty() || args.manifest_path.empty()) {
      throw ConfigError("configuration error: tune needs --clean DIR or --features plus "
                        "--manifest");
    }
    const DatasetManifest manifest = DatasetManifest::load(args.manifest_path);
    const DatasetBags bags =
        load_split_features(manifest, args.features_dir, args.split, args.seg_len);
    if (bags.bags.empty()) {
      throw DataError("empty-input error: split '" + args.split + "' has no feature bags");
    }
    result = run_tune(model, bags, args.target_fpr, args.granularity);
  }
  const std::string report = threshold_report_json(result);
  if (!args.out_path.empty()) write_file(args.out_path, report);
  std::cout << report;
  return 0;
}

int do_eval(const EvalArgs& args) {
  const MilModel model = load_checkpoint(args.checkpoint);
  const DatasetManifest manifest = DatasetManifest::load(args.manifest_path);
  const DatasetBags bags =
      load_split_features(manifest, args.features_dir, args.split, args.seg_len);
  if (bags.bags.empty()) {
    throw DataError("empty-input error: split '" + args.split + "' has no feature bags");
  }
  const ScoreTable table = score_split(model, bags);
  ThresholdResult tuning;
  tuning.threshold = args.threshold;
  tuning.target_fpr = args.target_fpr;
  tuning.achieved_fpr = 0.0;
  const EvalOutputs outputs =
      run_eval(table, args.threshold, tuning, to_string(model.kind), args.out_dir);
  std::cout << "auc " << outputs.roc.auc << ", recall_at_fpr " << outputs.confusion.recall
            << "; wrote metrics.csv and roc.csv to " << args.out_dir << "\n";
  return 0;
}

int do_energy(const EnergyArgs& args) {
  const DatasetManifest manifest = DatasetManifest::load(args.manifest_path);
  EnergyConfig config;
  config.normalize = args.normalize;
  config.k = args.k;
  config.patch = args.patch;
  config.window = args.window;
  const EnergyEvalResult result = run_energy_baseline(manifest, args.split, config,
                                                      args.target_fpr, args.out_dir, args.bag_len);
  std::cout << "energy baseline recall_at_fpr " << result.outputs.confusion.recall
            << " at threshold " << result.threshold.threshold << "; wrote metrics.csv to "
            << args.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakmil: weakly supervised detection of visual corruptions in video"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a weakly labeled synthetic dataset");
  synth->add_option("--config", synth_args.config_path, "Generator config JSON")->required();
  synth->add_option("--out", synth_args.out_dir, "Output dataset directory")->required();
  uint64_t seed_value = 0;
  auto* seed_opt = synth->add_option("--seed", seed_value, "Override the config seed");

  FeaturesArgs features_args;
  auto* features = app.add_subcommand("features", "Extract or import per-segment features");
  features->add_option("--manifest", features_args.manifest_path, "Dataset manifest JSON")->required();
  features->add_option("--out", features_args.out_dir, "Output feature directory")->required();
  features->add_option("--extractor", features_args.extractor, "builtin or import")
      ->capture_default_str();
  features->add_option("--from", features_args.import_from,
                       "Directory of external .wmil files (with --extractor import)");
  features->add_option("--bag-len", features_args.bag_len, "Frames per bag")->capture_default_str();
  features->add_option("--seg-len", features_args.seg_len, "Frames per segment")->capture_default_str();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a Deep MIL or attention model");
  train->add_option("--features", train_args.features_dir, "Feature directory")->required();
  train->add_option("--manifest", train_args.manifest_path, "Dataset manifest JSON")->required();
  train->add_option("--model", train_args.model, "deep-mil or attention")->capture_default_str();
  train->add_option("--out", train_args.out_dir, "Output directory for checkpoint and log")->required();
  train->add_option("--seed", train_args.seed, "Training seed")->capture_default_str();
  train->add_option("--epochs", train_args.epochs, "Training epochs")->capture_default_str();
  train->add_option("--optimizer", train_args.optimizer,
                    "adagrad or adam (default: adagrad for deep-mil, adam for attention)");
  train->add_option("--lr", train_args.lr,
                    "Learning rate (default: 0.1 for adagrad, 0.001 for adam)");
  train->add_option("--lambda", train_args.lambda, "Weight regularization coefficient")
      ->capture_default_str();
  train->add_option("--dropout", train_args.dropout, "Hidden dropout rate")->capture_default_str();
  train->add_option("--batch", train_args.batch, "Corrupted (and normal) bags per batch")
      ->capture_default_str();
  train->add_option("--hidden", train_args.hidden, "Hidden layer widths")->expected(2)
      ->capture_default_str();
  train->add_option("--attention-dim", train_args.attention_dim, "Attention units L")
      ->capture_default_str();
  train->add_option("--train-split", train_args.train_split, "Training split name")
      ->capture_default_str();
  train->add_option("--val-split", train_args.val_split, "Validation split name")
      ->capture_default_str();
  train->add_option("--metric", train_args.metric, "Selection metric: val_auc or val_recall")
      ->capture_default_str();
  train->add_option("--target-fpr", train_args.target_fpr, "FPR target for the logged recall")
      ->capture_default_str();

  TuneArgs tune_args;
  auto* tune = app.add_subcommand("tune", "Tune the detection threshold on clean data");
  tune->add_option("--checkpoint", tune_args.checkpoint, "Model checkpoint")->required();
  tune->add_option("--clean", tune_args.clean_dir, "Directory of known-clean .wmil files");
  tune->add_option("--features", tune_args.features_dir, "Feature directory (with --manifest)");
  tune->add_option("--manifest", tune_args.manifest_path, "Dataset manifest JSON");
  tune->add_option("--split", tune_args.split, "Split whose label-0 bags form the clean pool")
      ->capture_default_str();
  tune->add_option("--target-fpr", tune_args.target_fpr, "Maximum clean false-positive rate")
      ->capture_default_str();
  tune->add_option("--granularity", tune_args.granularity, "bag or segment")->capture_default_str();
  tune->add_option("--out", tune_args.out_path, "Write the threshold report JSON here");
  tune->add_option("--seg-len", tune_args.seg_len, "Frames per segment")->capture_default_str();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint at a fixed threshold");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint")->required();
  eval->add_option("--threshold", eval_args.threshold, "Detection threshold")->required();
  eval->add_option("--test,--features", eval_args.features_dir, "Feature directory")->required();
  eval->add_option("--manifest", eval_args.manifest_path, "Dataset manifest JSON")->required();
  eval->add_option("--split", eval_args.split, "Split to evaluate")->capture_default_str();
  eval->add_option("--out", eval_args.out_dir, "Output directory for metrics.csv / roc.csv")
      ->capture_default_str();
  eval->add_option("--target-fpr", eval_args.target_fpr, "Target FPR recorded in metrics.csv")
      ->capture_default_str();
  eval->add_option("--seg-len", eval_args.seg_len, "Frames per segment")->capture_default_str();

  EnergyArgs energy_args;
  auto* baseline = app.add_subcommand("baseline", "Unsupervised baselines");
  baseline->require_subcommand(1);
  auto* energy = baseline->add_subcommand("energy", "Patch-energy baseline");
  energy->add_option("--manifest", energy_args.manifest_path, "Dataset manifest JSON")->required();
  energy->add_option("--split", energy_args.split, "Split to evaluate")->capture_default_str();
  energy->add_flag("--normalize", energy_args.normalize,
                   "Divide patch energies by their recent history");
  energy->add_option("--target-fpr", energy_args.target_fpr, "Maximum clean false-positive rate")
      ->capture_default_str();
  energy->add_option("--k", energy_args.k, "Lowest-energy patches averaged")->capture_default_str();
  energy->add_option("--patch", energy_args.patch, "Patch size in pixels")->capture_default_str();
  energy->add_option("--window", energy_args.window, "Normalization history, frames")
      ->capture_default_str();
  energy->add_option("--bag-len", energy_args.bag_len, "Frames per bag")->capture_default_str();
  energy->add_option("--out", energy_args.out_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "weakmil: error: config: " << e.what() << std::endl;
    return 2;
  }

  try {
    if (*synth) {
      if (*seed_opt) synth_args.seed_override = seed_value;
      return do_synth(synth_args);
    }
    if (*features) return do_features(features_args);
    if (*train) return do_train(train_args);
    if (*tune) return do_tune(tune_args);
    if (*eval) return do_eval(eval_args);
    if (*baseline && *energy) return do_energy(energy_args);
    std::cerr << "weakmil: error: config: no subcommand selected" << std::endl;
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "weakmil: error: config: " << e.what() << std::endl;
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "weakmil: error: numeric: " << e.what() << std::endl;
    return 4;
  } catch (const DataError& e) {
    std::cerr << "weakmil: error: data: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "weakmil: error: internal: " << e.what() << std::endl;
    return 1;
  }
}
