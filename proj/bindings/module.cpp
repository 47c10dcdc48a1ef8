// Python bindings for the main operations: scene rendering, corruption
// injection, bag creation, feature extraction, the MIL model, threshold
// tuning, metrics, and the dataset/training pipeline.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "weakmil/features.hpp"
#include "weakmil/pipeline.hpp"

namespace py = pybind11;
using namespace weakmil;

namespace {

using ByteArray = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Frame frame_from_array(const ByteArray& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) {
    throw DataError("shape error: frame arrays must be (height, width, 3)");
  }
  Frame f(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
  std::memcpy(f.data.data(), arr.data(), f.data.size());
  return f;
}

py::array_t<uint8_t> frame_to_array(const Frame& f) {
  py::array_t<uint8_t> arr({f.height, f.width, 3});
  std::memcpy(arr.mutable_data(), f.data.data(), f.data.size());
  return arr;
}

Video video_from_array(const ByteArray& arr, const std::string& id = "py") {
  if (arr.ndim() != 4 || arr.shape(3) != 3) {
    throw DataError("shape error: video arrays must be (frames, height, width, 3)");
  }
  Video video;
  video.id = id;
  const int h = static_cast<int>(arr.shape(1));
  const int w = static_cast<int>(arr.shape(2));
  const size_t frame_bytes = static_cast<size_t>(h) * w * 3;
  video.frames.reserve(static_cast<size_t>(arr.shape(0)));
  for (py::ssize_t t = 0; t < arr.shape(0); ++t) {
    Frame f(h, w);
    std::memcpy(f.data.data(), arr.data() + static_cast<size_t>(t) * frame_bytes, frame_bytes);
    video.frames.push_back(std::move(f));
  }
  return video;
}

py::array_t<uint8_t> video_to_array(const Video& video) {
  const int n = static_cast<int>(video.frames.size());
  py::array_t<uint8_t> arr({n, video.height(), video.width(), 3});
  const size_t frame_bytes = static_cast<size_t>(video.height()) * video.width() * 3;
  for (int t = 0; t < n; ++t) {
    std::memcpy(arr.mutable_data() + static_cast<size_t>(t) * frame_bytes,
                video.frames[static_cast<size_t>(t)].data.data(), frame_bytes);
  }
  return arr;
}

Segment segment_from_array(const ByteArray& arr) {
  const Video v = video_from_array(arr);
  Segment seg;
  seg.frames = v.frames;
  return seg;
}

FeatureBag bag_from_array(const DoubleArray& arr, const std::string& id = "py") {
  if (arr.ndim() != 2) throw DataError("shape error: feature bags must be (segments, dim)");
  FeatureBag bag;
  bag.bag_id = id;
  for (py::ssize_t s = 0; s < arr.shape(0); ++s) {
    FeatureVector v(static_cast<size_t>(arr.shape(1)));
    std::memcpy(v.data(), arr.data() + static_cast<size_t>(s * arr.shape(1)),
                v.size() * sizeof(double));
    bag.vectors.push_back(std::move(v));
  }
  return bag;
}

py::array_t<double> bag_to_array(const FeatureBag& bag) {
  py::array_t<double> arr({static_cast<py::ssize_t>(bag.segment_count()),
                           static_cast<py::ssize_t>(bag.dim())});
  for (size_t s = 0; s < bag.segment_count(); ++s) {
    std::memcpy(arr.mutable_data() + s * bag.dim(), bag.vectors[s].data(),
                bag.dim() * sizeof(double));
  }
  return arr;
}

CorruptionEvent event_from_args(const std::string& kind, int start, int duration,
                                const std::map<std::string, double>& params, uint64_t sub_seed) {
  CorruptionEvent e;
  e.kind = corruption_kind_from_string(kind);
  e.start_frame = start;
  e.duration = duration;
  e.params = params;
  e.sub_seed = sub_seed;
  return e;
}

py::dict threshold_to_dict(const ThresholdResult& t) {
  py::dict d;
  d["threshold"] = t.threshold;
  d["achieved_fpr"] = t.achieved_fpr;
  d["target_fpr"] = t.target_fpr;
  d["granularity"] = t.granularity;
  d["clean_units"] = t.n_clean;
  d["false_positives"] = t.false_positives;
  return d;
}

TrainConfig train_config_from_dict(const py::dict& cfg) {
  TrainConfig config = TrainConfig::for_model(
      cfg.contains("model") ? model_kind_from_string(cfg["model"].cast<std::string>())
                            : MilModel::Kind::DeepMil);
  if (cfg.contains("optimizer")) {
    config.optimizer = optimizer_from_string(cfg["optimizer"].cast<std::string>());
    config.lr = config.optimizer == OptimizerKind::Adam ? 1e-3 : 0.1;
  }
  if (cfg.contains("lr")) config.lr = cfg["lr"].cast<double>();
  if (cfg.contains("epochs")) config.epochs = cfg["epochs"].cast<int>();
  if (cfg.contains("seed")) config.seed = cfg["seed"].cast<uint64_t>();
  if (cfg.contains("lambda_")) config.lambda = cfg["lambda_"].cast<double>();
  if (cfg.contains("lambda")) config.lambda = cfg["lambda"].cast<double>();
  if (cfg.contains("dropout")) config.dropout = cfg["dropout"].cast<double>();
  if (cfg.contains("batch")) {
    config.batch_corrupted = config.batch_normal = cfg["batch"].cast<int>();
  }
  if (cfg.contains("hidden")) config.hidden = cfg["hidden"].cast<std::vector<int>>();
  if (cfg.contains("attention_dim")) config.attention_dim = cfg["attention_dim"].cast<int>();
  if (cfg.contains("metric")) config.selection_metric = cfg["metric"].cast<std::string>();
  if (cfg.contains("target_fpr")) config.target_fpr = cfg["target_fpr"].cast<double>();
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Weakly supervised MIL detection of visual corruptions in video";

  // Translators run newest-first, so the base class is registered first.
  static auto exc_base = py::register_exception<Error>(m, "WeakmilError");
  py::register_exception<ConfigError>(m, "ConfigError", exc_base.ptr());
  py::register_exception<DataError>(m, "DataError", exc_base.ptr());
  py::register_exception<NumericError>(m, "NumericError", exc_base.ptr());

  m.attr("DESCRIPTOR_DIM") = kDescriptorDim;
  m.attr("CORRUPTION_KINDS") = [] {
    py::list names;
    for (CorruptionKind kind : kAllCorruptionKinds) names.append(to_string(kind));
    return names;
  }();

  m.def(
      "render_base_video",
      [](int height, int width, const std::string& motion, uint64_t palette_seed, int n_frames,
         uint64_t seed) {
        SceneSpec spec;
        spec.height = height;
        spec.width = width;
        spec.motion = motion_from_string(motion);
        spec.palette_seed = palette_seed;
        return video_to_array(render_base_video(spec, n_frames, seed));
      },
      py::arg("height") = 112, py::arg("width") = 112,
      py::arg("motion") = "DriftingGradient", py::arg("palette_seed") = 0,
      py::arg("n_frames") = 512, py::arg("seed") = 0,
      "Render a deterministic procedural base video as a (frames, h, w, 3) uint8 array.");

  m.def(
      "inject",
      [](const ByteArray& video, const std::string& kind, int start, int duration,
         const std::map<std::string, double>& params, uint64_t sub_seed) {
        return video_to_array(
            inject(video_from_array(video), event_from_args(kind, start, duration, params, sub_seed)));
      },
      py::arg("video"), py::arg("kind"), py::arg("start"), py::arg("duration"),
      py::arg("params") = std::map<std::string, double>{}, py::arg("sub_seed") = 0,
      "Apply one corruption event; frames outside [start, start+duration) are untouched.");

  m.def(
      "resize_frame",
      [](const ByteArray& frame, int out_h, int out_w) {
        return frame_to_array(resize_frame(frame_from_array(frame), out_h, out_w));
      },
      py::arg("frame"), py::arg("out_h") = 112, py::arg("out_w") = 112,
      "Area-average resize with half-up rounding.");

  m.def(
      "make_bags",
      [](const ByteArray& video, int bag_len, int seg_len) {
        py::list out;
        for (const Bag& bag : make_bags(video_from_array(video), bag_len, seg_len)) {
          Video flat;
          for (const Segment& seg : bag.segments) {
            flat.frames.insert(flat.frames.end(), seg.frames.begin(), seg.frames.end());
          }
          auto arr = video_to_array(flat);
          out.append(arr.reshape({static_cast<py::ssize_t>(bag.segments.size()),
                                  static_cast<py::ssize_t>(seg_len),
                                  static_cast<py::ssize_t>(flat.height()),
                                  static_cast<py::ssize_t>(flat.width()), py::ssize_t{3}}));
        }
        return out;
      },
      py::arg("video"), py::arg("bag_len") = 512, py::arg("seg_len") = 16,
      "Split a video into bags of (segments, seg_len, h, w, 3); the remainder is dropped.");

  m.def(
      "extract_segment_features",
      [](const ByteArray& segment) {
        const FeatureVector v = extract_segment_features(segment_from_array(segment));
        py::array_t<double> arr(static_cast<py::ssize_t>(v.size()));
        std::memcpy(arr.mutable_data(), v.data(), v.size() * sizeof(double));
        return arr;
      },
      py::arg("segment"),
      "Built-in 1176-dim descriptor of a (frames, 112, 112, 3) segment.");

  m.def(
      "extract_video_features",
      [](const ByteArray& video, int bag_len, int seg_len) {
        py::list out;
        for (const FeatureBag& bag :
             extract_video_features(video_from_array(video), bag_len, seg_len)) {
          out.append(bag_to_array(bag));
        }
        return out;
      },
      py::arg("video"), py::arg("bag_len") = 512, py::arg("seg_len") = 16);

  m.def(
      "save_features",
      [](const std::string& path, const std::vector<DoubleArray>& bags) {
        std::vector<FeatureBag> out;
        for (size_t i = 0; i < bags.size(); ++i) {
          out.push_back(bag_from_array(bags[i], "bag" + std::to_string(i)));
        }
        save_features(path, out);
      },
      py::arg("path"), py::arg("bags"), "Write feature bags to a WMIL file.");

  m.def(
      "load_features",
      [](const std::string& path) {
        py::list out;
        for (const FeatureBag& bag : load_features(path)) out.append(bag_to_array(bag));
        return out;
      },
      py::arg("path"));

  m.def("ranking_hinge_loss", &ranking_hinge_loss, py::arg("scores_corrupted"),
        py::arg("scores_normal"), "max(0, 1 - max(corrupted) + max(normal))");

  m.def(
      "attention_pool",
      [](const DoubleArray& instances, const DoubleArray& V, const DoubleArray& w) {
        if (instances.ndim() != 2 || V.ndim() != 2 || w.ndim() != 1) {
          throw DataError("shape error: attention_pool expects (K,M), (L,M), (L,)");
        }
        AttentionHead att = AttentionHead::zeros(static_cast<int>(V.shape(0)),
                                                 static_cast<int>(V.shape(1)));
        std::memcpy(att.V.a.data(), V.data(), att.V.a.size() * sizeof(double));
        std::memcpy(att.w.data(), w.data(), att.w.size() * sizeof(double));
        std::vector<Vec> h;
        for (py::ssize_t k = 0; k < instances.shape(0); ++k) {
          Vec v(static_cast<size_t>(instances.shape(1)));
          std::memcpy(v.data(), instances.data() + static_cast<size_t>(k * instances.shape(1)),
                      v.size() * sizeof(double));
          h.push_back(std::move(v));
        }
        const AttentionPoolResult result = attention_pool(h, att);
        return py::make_tuple(result.pooled, result.weights);
      },
      py::arg("instances"), py::arg("V"), py::arg("w"),
      "Softmax-weighted pooling; returns (pooled_vector, weights).");

  m.def(
      "tune_threshold",
      [](const Vec& clean_scores, double target_fpr, const std::string& granularity) {
        return threshold_to_dict(tune_threshold(clean_scores, target_fpr, granularity));
      },
      py::arg("clean_scores"), py::arg("target_fpr") = 0.001, py::arg("granularity") = "bag");

  m.def(
      "roc_auc",
      [](const Vec& scores, const std::vector<int>& labels) {
        const RocResult r = roc_auc(scores, labels);
        py::array_t<double> pts({static_cast<py::ssize_t>(r.points.size()), py::ssize_t{3}});
        for (size_t i = 0; i < r.points.size(); ++i) {
          pts.mutable_at(static_cast<py::ssize_t>(i), 0) = r.points[i].fpr;
          pts.mutable_at(static_cast<py::ssize_t>(i), 1) = r.points[i].tpr;
          pts.mutable_at(static_cast<py::ssize_t>(i), 2) = r.points[i].threshold;
        }
        return py::make_tuple(r.auc, pts);
      },
      py::arg("scores"), py::arg("labels"),
      "Strict-threshold ROC sweep; returns (auc, points[fpr,tpr,threshold]).");

  m.def(
      "recall_at_fpr",
      [](const Vec& scores, const std::vector<int>& labels, double threshold) {
        ScoreTable table;
        for (size_t i = 0; i < scores.size(); ++i) {
          ScoreRow row;
          row.bag_id = "bag" + std::to_string(i);
          row.label = labels[i];
          row.bag_score = scores[i];
          table.push_back(std::move(row));
        }
        const ConfusionResult r = recall_at_fpr(table, threshold);
        py::dict d;
        d["recall"] = r.recall;
        d["tp"] = r.tp;
        d["fp"] = r.fp;
        d["tn"] = r.tn;
        d["fn"] = r.fn;
        return d;
      },
      py::arg("scores"), py::arg("labels"), py::arg("threshold"));

  m.def(
      "patch_energies",
      [](const ByteArray& frame, int patch) {
        return patch_energies(frame_from_array(frame), patch);
      },
      py::arg("frame"), py::arg("patch") = 32);

  py::class_<MilModel>(m, "MilModel")
      .def_static(
          "init",
          [](int in_dim, const std::vector<int>& hidden, uint64_t seed, const std::string& kind,
             int attention_dim, bool zero) {
            MilModel model;
            model.kind = model_kind_from_string(kind);
            std::vector<int> dims = {in_dim};
            dims.insert(dims.end(), hidden.begin(), hidden.end());
            dims.push_back(1);
            SplitMix64 rng(seed);
            model.fc = zero ? FcHead::zeros(dims) : FcHead::glorot(dims, rng);
            if (model.kind == MilModel::Kind::Attention) {
              model.attention = zero ? AttentionHead::zeros(attention_dim, hidden.back())
                                     : AttentionHead::glorot(attention_dim, hidden.back(), rng);
            }
            return model;
          },
          py::arg("in_dim"), py::arg("hidden") = std::vector<int>{512, 32}, py::arg("seed") = 0,
          py::arg("kind") = "deep-mil", py::arg("attention_dim") = 16, py::arg("zero") = false)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const MilModel& model, const std::string& path) {
        save_checkpoint(path, model);
      })
      .def_property_readonly("kind", [](const MilModel& model) { return to_string(model.kind); })
      .def_property_readonly("in_dim", &MilModel::in_dim)
      .def("score",
           [](const MilModel& model, const Vec& x) { return fc_forward(model.fc, x); },
           py::arg("features"), "Segment score in (0,1).")
      .def(
          "score_bag",
          [](const MilModel& model, const DoubleArray& bag) {
            return score_segments(model.fc, bag_from_array(bag));
          },
          py::arg("bag"), "Per-segment scores of a (segments, dim) bag.")
      .def(
          "bag_score",
          [](const MilModel& model, const DoubleArray& bag) {
            return model_bag_score(model, bag_from_array(bag));
          },
          py::arg("bag"),
          "Bag-level score: max segment score (deep-mil) or pooled probability (attention).");

  // ---- pipeline over datasets on disk ----

  m.def(
      "generate_dataset",
      [](const std::string& config_json, const std::string& out_dir) {
        const DatasetManifest manifest =
            run_synth(generator_config_from_json(config_json), out_dir);
        return out_dir + "/manifest.json";
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Generate a synthetic weakly labeled dataset; returns the manifest path.");

  m.def(
      "run_features",
      [](const std::string& manifest_path, const std::string& out_dir, int bag_len, int seg_len) {
        FeaturesOptions options;
        options.bag_len = bag_len;
        options.seg_len = seg_len;
        run_features(DatasetManifest::load(manifest_path), out_dir, options);
      },
      py::arg("manifest_path"), py::arg("out_dir"), py::arg("bag_len") = 512,
      py::arg("seg_len") = 16);

  m.def(
      "run_train",
      [](const std::string& manifest_path, const std::string& features_dir,
         const std::string& out_dir, const py::dict& config) {
        const TrainOutputs outputs = run_train(DatasetManifest::load(manifest_path), features_dir,
                                               train_config_from_dict(config), out_dir);
        py::dict d;
        d["checkpoint"] = outputs.checkpoint_path;
        d["log"] = outputs.log_path;
        d["best_epoch"] = outputs.result.best_epoch;
        d["best_metric"] = outputs.result.best_metric;
        return d;
      },
      py::arg("manifest_path"), py::arg("features_dir"), py::arg("out_dir"),
      py::arg("config") = py::dict());

  m.def(
      "run_tune",
      [](const std::string& checkpoint, const std::string& manifest_path,
         const std::string& features_dir, const std::string& split, double target_fpr,
         const std::string& granularity) {
        const MilModel model = load_checkpoint(checkpoint);
        const DatasetBags bags =
            load_split_features(DatasetManifest::load(manifest_path), features_dir, split);
        return threshold_to_dict(run_tune(model, bags, target_fpr, granularity));
      },
      py::arg("checkpoint"), py::arg("manifest_path"), py::arg("features_dir"),
      py::arg("split") = "test", py::arg("target_fpr") = 0.001, py::arg("granularity") = "bag");

  m.def(
      "run_eval",
      [](const std::string& checkpoint, const std::string& manifest_path,
         const std::string& features_dir, const std::string& split, double threshold,
         const std::string& out_dir) {
        const MilModel model = load_checkpoint(checkpoint);
        const DatasetBags bags =
            load_split_features(DatasetManifest::load(manifest_path), features_dir, split);
        const ScoreTable table = score_split(model, bags);
        ThresholdResult tuning;
        tuning.threshold = threshold;
        const EvalOutputs outputs = run_eval(table, threshold, tuning, to_string(model.kind), out_dir);
        py::dict d;
        d["auc"] = outputs.roc.auc;
        d["recall_at_fpr"] = outputs.confusion.recall;
        d["fp"] = outputs.confusion.fp;
        d["metrics_csv"] = out_dir + "/metrics.csv";
        d["roc_csv"] = out_dir + "/roc.csv";
        return d;
      },
      py::arg("checkpoint"), py::arg("manifest_path"), py::arg("features_dir"),
      py::arg("split"), py::arg("threshold"), py::arg("out_dir"));

  m.def(
      "run_energy_baseline",
      [](const std::string& manifest_path, const std::string& split, bool normalize,
         double target_fpr, const std::string& out_dir, int bag_len) {
        EnergyConfig config;
        config.normalize = normalize;
        const EnergyEvalResult result = run_energy_baseline(
            DatasetManifest::load(manifest_path), split, config, target_fpr, out_dir, bag_len);
        py::dict d;
        d["recall_at_fpr"] = result.outputs.confusion.recall;
        d["auc"] = result.outputs.roc.auc;
        d["threshold"] = result.threshold.threshold;
        return d;
      },
      py::arg("manifest_path"), py::arg("split") = "test", py::arg("normalize") = false,
      py::arg("target_fpr") = 0.001, py::arg("out_dir") = ".", py::arg("bag_len") = 512);
}
