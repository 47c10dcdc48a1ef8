#include "weakmil/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "weakmil/common.hpp"
#include "weakmil/features.hpp"

namespace weakmil {

using nlohmann::json;

GeneratorConfig generator_config_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration error: config is not valid JSON: ") + e.what());
  }
  try {
    if (doc.value("version", 0) != 1) {
      throw ConfigError("configuration error: config must carry \"version\": 1");
    }
    GeneratorConfig config;
    config.seed = doc.value("seed", 0ULL);
    config.frames_per_video = doc.value("frames_per_video", 512);
    config.p_corrupt = doc.value("p_corrupt", 1.0);
    if (doc.contains("resolution")) {
      const auto& res = doc.at("resolution");
      config.height = res.at(0).get<int>();
      config.width = res.at(1).get<int>();
    }
    if (doc.contains("events_per_positive")) {
      const auto& range = doc.at("events_per_positive");
      config.events_min = range.at(0).get<int>();
      config.events_max = range.at(1).get<int>();
    }
    if (doc.contains("splits")) {
      for (const json& s : doc.at("splits")) {
        SplitPlan plan;
        plan.name = s.at("name").get<std::string>();
        plan.corrupted = s.value("corrupted", 0);
        plan.normal = s.value("normal", 0);
        if (s.contains("kinds")) {
          for (const json& k : s.at("kinds")) {
            plan.kinds.push_back(corruption_kind_from_string(k.get<std::string>()));
          }
        }
        config.splits.push_back(std::move(plan));
      }
    } else {
      SplitPlan plan;
      plan.name = "train";
      plan.corrupted = doc.value("n_corrupted", 0);
      plan.normal = doc.value("n_normal", 0);
      config.splits.push_back(std::move(plan));
    }
    config.validate();
    return config;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration error: malformed config: ") + e.what());
  }
}

GeneratorConfig load_generator_config(const std::string& path) {
  return generator_config_from_json(read_file(path));
}

std::string feature_path_for(const std::string& features_dir, const ManifestEntry& entry) {
  return (std::filesystem::path(features_dir) / (path_stem(entry.path) + ".wmil")).string();
}

DatasetBags load_split_features(const DatasetManifest& manifest, const std::string& features_dir,
                                const std::string& split, int seg_len) {
  DatasetBags out;
  size_t segs_per_bag = 0;
  size_t dim = 0;
  for (const ManifestEntry& entry : manifest.videos) {
    if (entry.split != split) continue;
    const std::string path = feature_path_for(features_dir, entry);
    std::vector<FeatureBag> bags = load_features(path);
    for (size_t b = 0; b < bags.size(); ++b) {
      FeatureBag& bag = bags[b];
      if (segs_per_bag == 0 && dim == 0) {
        segs_per_bag = bag.segment_count();
        dim = bag.dim();
      } else if (bag.segment_count() != segs_per_bag) {
        throw ConfigError("configuration error: '" + path + "' has " +
                          std::to_string(bag.segment_count()) + " segments per bag, dataset uses " +
                          std::to_string(segs_per_bag));
      } else if (bag.dim() != dim) {
        throw ConfigError("configuration error: '" + path + "' has feature dim " +
                          std::to_string(bag.dim()) + ", dataset uses " + std::to_string(dim));
      }
      const int bag_frames = static_cast<int>(segs_per_bag) * seg_len;
      const int begin = static_cast<int>(b) * bag_frames;
      const int end = begin + bag_frames;
      int gt = 0;
      std::vector<CorruptionKind> kinds;
      if (entry.label == 1) {
        for (const CorruptionEvent& event : entry.events) {
          if (event.overlaps(begin, end)) {
            gt = 1;
            kinds.push_back(event.kind);
          }
        }
      }
      out.ids.push_back(path_stem(entry.path) + "#" + std::to_string(b));
      bag.bag_id = out.ids.back();
      out.weak_labels.push_back(entry.label);
      out.gt_labels.push_back(gt);
      out.kinds.push_back(std::move(kinds));
      out.bags.push_back(std::move(bag));
    }
  }
  return out;
}

DatasetManifest run_synth(const GeneratorConfig& config, const std::string& out_dir) {
  return generate_dataset(config, out_dir);
}

void run_features(const DatasetManifest& manifest, const std::string& out_dir,
                  const FeaturesOptions& options) {
  if (manifest.videos.empty()) {
    throw DataError("empty-input error: manifest lists no videos");
  }
  ensure_dir(out_dir);
  for (const ManifestEntry& entry : manifest.videos) {
    const std::string dst = feature_path_for(out_dir, entry);
    if (options.import_from) {
      const std::string src = feature_path_for(*options.import_from, entry);
      save_features(dst, import_external_features(src));
    } else {
      const Video video = load_video(manifest.resolve(entry));
      save_features(dst, extract_video_features(video, options.bag_len, options.seg_len));
    }
  }
}

TrainOutputs run_train(const DatasetManifest& manifest, const std::string& features_dir,
                       const TrainConfig& config, const std::string& out_dir,
                       const std::string& train_split, const std::string& val_split) {
  const DatasetBags train_bags = load_split_features(manifest, features_dir, train_split);
  const DatasetBags val_bags = load_split_features(manifest, features_dir, val_split);
  if (train_bags.bags.empty()) {
    throw DataError("empty-input error: split '" + train_split + "' has no feature bags");
  }
  if (val_bags.bags.empty()) {
    throw DataError("empty-input error: split '" + val_split + "' has no feature bags");
  }

  TrainPools pools;
  for (size_t i = 0; i < train_bags.bags.size(); ++i) {
    (train_bags.weak_labels[i] == 1 ? pools.corrupted : pools.normal)
        .push_back(&train_bags.bags[i]);
  }
  std::vector<EvalBag> validation;
  validation.reserve(val_bags.bags.size());
  for (size_t i = 0; i < val_bags.bags.size(); ++i) {
    validation.push_back({&val_bags.bags[i], val_bags.gt_labels[i]});
  }

  ensure_dir(out_dir);
  TrainOutputs outputs;
  outputs.result = train(config, pools, validation);
  outputs.checkpoint_path = (std::filesystem::path(out_dir) / "model.wmck").string();
  outputs.log_path = (std::filesystem::path(out_dir) / "train_log.csv").string();
  save_checkpoint(outputs.checkpoint_path, outputs.result.best_model);
  write_train_log_csv(outputs.log_path, outputs.result.log);
  return outputs;
}

ScoreTable score_split(const MilModel& model, const DatasetBags& bags) {
  ScoreTable table;
  table.reserve(bags.bags.size());
  for (size_t i = 0; i < bags.bags.size(); ++i) {
    ScoreRow row;
    row.bag_id = bags.ids[i];
    row.label = bags.gt_labels[i];
    row.segment_scores = score_segments(model.fc, bags.bags[i]);
    row.bag_score = model.kind == MilModel::Kind::Attention
                        ? attention_bag_score(model, bags.bags[i])
                        : bag_score(row.segment_scores);
    row.kinds = bags.kinds[i];
    table.push_back(std::move(row));
  }
  return table;
}

ThresholdResult run_tune(const MilModel& model, const DatasetBags& bags, double target_fpr,
                         const std::string& granularity) {
  Vec clean;
  for (size_t i = 0; i < bags.bags.size(); ++i) {
    if (bags.weak_labels[i] != 0) continue;
    if (granularity == "segment") {
      const Vec scores = score_segments(model.fc, bags.bags[i]);
      clean.insert(clean.end(), scores.begin(), scores.end());
    } else {
      clean.push_back(model_bag_score(model, bags.bags[i]));
    }
  }
  if (clean.empty()) {
    throw DataError("empty-input error: no clean bags available for tuning");
  }
  return tune_threshold(std::move(clean), target_fpr, granularity);
}

ThresholdResult run_tune_clean_dir(const MilModel& model, const std::string& clean_dir,
                                   double target_fpr, const std::string& granularity) {
  std::vector<std::string> files;
  if (!std::filesystem::is_directory(clean_dir)) {
    throw DataError("I/O error: '" + clean_dir + "' is not a directory");
  }
  for (const auto& entry : std::filesystem::directory_iterator(clean_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wmil") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  Vec clean;
  for (const std::string& file : files) {
    for (const FeatureBag& bag : load_features(file)) {
      if (granularity == "segment") {
        const Vec scores = score_segments(model.fc, bag);
        clean.insert(clean.end(), scores.begin(), scores.end());
      } else {
        clean.push_back(model_bag_score(model, bag));
      }
    }
  }
  if (clean.empty()) {
    throw DataError("empty-input error: no clean feature bags under '" + clean_dir + "'");
  }
  return tune_threshold(std::move(clean), target_fpr, granularity);
}

std::string threshold_report_json(const ThresholdResult& result) {
  json doc{{"version", 1},
           {"threshold", result.threshold},
           {"achieved_fpr", result.achieved_fpr},
           {"target_fpr", result.target_fpr},
           {"granularity", result.granularity},
           {"clean_units", result.n_clean},
           {"false_positives", result.false_positives}};
  return doc.dump(2) + "\n";
}

EvalOutputs run_eval(const ScoreTable& table, double threshold, const ThresholdResult& tuning,
                     const std::string& model_name, const std::string& out_dir) {
  ensure_dir(out_dir);
  EvalOutputs outputs;
  outputs.confusion = recall_at_fpr(table, threshold);
  outputs.roc = roc_auc(table);
  outputs.per_kind = per_kind_report(table, threshold);
  write_metrics_csv((std::filesystem::path(out_dir) / "metrics.csv").string(), model_name,
                    outputs.confusion, outputs.roc, tuning, outputs.per_kind);
  write_roc_csv((std::filesystem::path(out_dir) / "roc.csv").string(), outputs.roc);
  return outputs;
}

EnergyEvalResult run_energy_baseline(const DatasetManifest& manifest, const std::string& split,
                                     const EnergyConfig& config, double target_fpr,
                                     const std::string& out_dir, int bag_len) {
  EnergyEvalResult result;
  Vec clean_scores;
  for (const ManifestEntry& entry : manifest.videos) {
    if (entry.split != split) continue;
    const Video video = load_video(manifest.resolve(entry));
    const VideoEnergyScores scores = video_energy_scores(video, config);
    const int n_bags = static_cast<int>(video.frames.size()) / bag_len;
    for (int b = 0; b < n_bags; ++b) {
      ScoreRow row;
      row.bag_id = path_stem(entry.path) + "#" + std::to_string(b);
      row.bag_score = energy_bag_score(scores, b * bag_len, (b + 1) * bag_len);
      row.label = 0;
      if (entry.label == 1) {
        for (const CorruptionEvent& event : entry.events) {
          if (event.overlaps(b * bag_len, (b + 1) * bag_len)) {
            row.label = 1;
            row.kinds.push_back(event.kind);
          }
        }
      }
      if (entry.label == 0) clean_scores.push_back(row.bag_score);
      result.table.push_back(std::move(row));
    }
  }
  if (result.table.empty()) {
    throw DataError("empty-input error: split '" + split + "' has no bags to score");
  }
  result.threshold = tune_threshold(clean_scores, target_fpr, "bag");
  result.outputs = run_eval(result.table, result.threshold.threshold, result.threshold,
                            config.normalize ? "energy-norm" : "energy", out_dir);
  return result;
}

}  // namespace weakmil
