#include "weakmil/core.hpp"

#include <filesystem>
#include <set>
#include <utility>

#include <json.hpp>

#include "weakmil/common.hpp"

namespace weakmil {

using nlohmann::json;

std::vector<Bag> make_bags(const Video& video, int bag_len, int seg_len) {
  if (bag_len <= 0 || seg_len <= 0) {
    throw ConfigError("configuration error: bag_len and seg_len must be positive");
  }
  if (bag_len % seg_len != 0) {
    throw ConfigError("configuration error: seg_len " + std::to_string(seg_len) +
                      " does not divide bag_len " + std::to_string(bag_len));
  }
  if (video.frames.empty()) {
    throw DataError("empty-input error: video '" + video.id + "' has no frames");
  }
  const int segs_per_bag = bag_len / seg_len;
  const size_t n_bags = video.frames.size() / static_cast<size_t>(bag_len);
  std::vector<Bag> bags;
  bags.reserve(n_bags);
  for (size_t b = 0; b < n_bags; ++b) {
    Bag bag;
    bag.source_id = video.id;
    bag.start_frame = static_cast<int>(b) * bag_len;
    bag.segments.reserve(segs_per_bag);
    for (int s = 0; s < segs_per_bag; ++s) {
      Segment seg;
      seg.frames.reserve(seg_len);
      const size_t begin = b * bag_len + static_cast<size_t>(s) * seg_len;
      for (int f = 0; f < seg_len; ++f) {
        seg.frames.push_back(video.frames[begin + f]);
      }
      bag.segments.push_back(std::move(seg));
    }
    bags.push_back(std::move(bag));
  }
  return bags;
}

// ---- corruption kinds ----

const char* to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::Flicker: return "Flicker";
    case CorruptionKind::DisplayStride: return "DisplayStride";
    case CorruptionKind::Lines: return "Lines";
    case CorruptionKind::GreenFlash: return "GreenFlash";
    case CorruptionKind::ColorSpaceChange: return "ColorSpaceChange";
    case CorruptionKind::MessagePopup: return "MessagePopup";
    case CorruptionKind::MacroBlock: return "MacroBlock";
    case CorruptionKind::HalfScreen: return "HalfScreen";
    case CorruptionKind::BottomSplit: return "BottomSplit";
    case CorruptionKind::SuddenBlackout: return "SuddenBlackout";
  }
  return "?";
}

CorruptionKind corruption_kind_from_string(const std::string& name) {
  for (CorruptionKind kind : kAllCorruptionKinds) {
    if (name == to_string(kind)) return kind;
  }
  throw ConfigError("configuration error: unknown corruption kind '" + name + "'");
}

// ---- manifest ----

static json event_to_json(const CorruptionEvent& event) {
  json p = json::object();
  for (const auto& [key, value] : event.params) p[key] = value;
  return json{{"kind", to_string(event.kind)},
              {"start", event.start_frame},
              {"duration", event.duration},
              {"params", p},
              {"sub_seed", event.sub_seed}};
}

static CorruptionEvent event_from_json(const json& j) {
  CorruptionEvent event;
  event.kind = corruption_kind_from_string(j.at("kind").get<std::string>());
  event.start_frame = j.at("start").get<int>();
  event.duration = j.at("duration").get<int>();
  event.sub_seed = j.value("sub_seed", 0ULL);
  if (j.contains("params")) {
    for (const auto& [key, value] : j.at("params").items()) {
      event.params[key] = value.get<double>();
    }
  }
  return event;
}

std::string DatasetManifest::to_json() const {
  json entries = json::array();
  std::set<std::string> seen;
  for (const ManifestEntry& entry : videos) {
    if (!seen.insert(entry.path).second) {
      throw DataError("format error: duplicate video path '" + entry.path + "' in manifest");
    }
    json events = json::array();
    for (const CorruptionEvent& event : entry.events) events.push_back(event_to_json(event));
    entries.push_back(json{{"path", entry.path},
                           {"label", entry.label},
                           {"split", entry.split},
                           {"events", events}});
  }
  json doc{{"version", 1}, {"seed", seed}, {"videos", entries}};
  return doc.dump(2) + "\n";
}

void DatasetManifest::save(const std::string& path) const { write_file(path, to_json()); }

DatasetManifest DatasetManifest::load(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError("format error: manifest '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    if (doc.value("version", 0) != 1) {
      throw DataError("format error: manifest '" + path + "' has unsupported version");
    }
    DatasetManifest manifest;
    manifest.seed = doc.value("seed", 0ULL);
    manifest.root = std::filesystem::path(path).parent_path().string();
    std::set<std::string> seen;
    for (const json& v : doc.at("videos")) {
      ManifestEntry entry;
      entry.path = v.at("path").get<std::string>();
      entry.label = v.at("label").get<int>();
      entry.split = v.at("split").get<std::string>();
      if (entry.label != 0 && entry.label != 1) {
        throw DataError("format error: label must be 0 or 1 in manifest '" + path + "'");
      }
      if (!seen.insert(entry.path).second) {
        throw DataError("format error: duplicate video path '" + entry.path + "' in manifest");
      }
      if (v.contains("events")) {
        for (const json& e : v.at("events")) entry.events.push_back(event_from_json(e));
      }
      manifest.videos.push_back(std::move(entry));
    }
    return manifest;
  } catch (const json::exception& e) {
    throw DataError("format error: manifest '" + path + "' is malformed: " + e.what());
  }
}

std::string DatasetManifest::resolve(const ManifestEntry& entry) const {
  std::filesystem::path p(entry.path);
  if (p.is_absolute() || root.empty()) return entry.path;
  return (std::filesystem::path(root) / p).string();
}

// ---- WMIL feature files ----

static constexpr char kFeatureMagic[4] = {'W', 'M', 'I', 'L'};
static constexpr uint32_t kFeatureVersion = 1;

void save_features(const std::string& path, const std::vector<FeatureBag>& bags) {
  const size_t segs = bags.empty() ? 0 : bags.front().segment_count();
  const size_t dim = bags.empty() ? 0 : bags.front().dim();
  for (const FeatureBag& bag : bags) {
    if (bag.segment_count() != segs) {
      throw ConfigError("configuration error: all bags in one feature file must share "
                        "segments per bag");
    }
    for (const FeatureVector& v : bag.vectors) {
      if (v.size() != dim) {
        throw ConfigError("configuration error: feature dimension must be uniform");
      }
    }
  }
  std::string out;
  out.reserve(20 + bags.size() * segs * dim * 4);
  out.append(kFeatureMagic, 4);
  bin::put_u32(out, kFeatureVersion);
  bin::put_u32(out, static_cast<uint32_t>(bags.size()));
  bin::put_u32(out, static_cast<uint32_t>(segs));
  bin::put_u32(out, static_cast<uint32_t>(dim));
  for (const FeatureBag& bag : bags) {
    for (const FeatureVector& v : bag.vectors) {
      for (double x : v) bin::put_f32(out, static_cast<float>(x));
    }
  }
  write_file(path, out);
}

std::vector<FeatureBag> load_features(const std::string& path) {
  const std::string bytes = read_file(path);
  bin::Reader r(bytes, "feature file '" + path + "'");
  r.expect_header(kFeatureMagic, kFeatureVersion);
  const uint32_t n_bags = r.u32();
  const uint32_t segs = r.u32();
  const uint32_t dim = r.u32();
  const std::string stem = path_stem(path);
  std::vector<FeatureBag> bags;
  bags.reserve(n_bags);
  for (uint32_t b = 0; b < n_bags; ++b) {
    FeatureBag bag;
    bag.bag_id = stem + "#" + std::to_string(b);
    bag.vectors.reserve(segs);
    for (uint32_t s = 0; s < segs; ++s) {
      FeatureVector v(dim);
      for (uint32_t d = 0; d < dim; ++d) v[d] = static_cast<double>(r.f32());
      bag.vectors.push_back(std::move(v));
    }
    bags.push_back(std::move(bag));
  }
  r.expect_exhausted();
  return bags;
}

std::string path_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

}  // namespace weakmil
