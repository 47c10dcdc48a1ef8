#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "weakmil/frame.hpp"

namespace weakmil {

// ---- bag decomposition ----

// A contiguous run of seg_len frames; the unit scored at test time.
struct Segment {
  std::vector<Frame> frames;
};

// A contiguous run of bag_len frames split into bag_len/seg_len segments;
// the unit carrying one weak label.
struct Bag {
  std::vector<Segment> segments;
  std::string source_id;
  int start_frame = 0;
};

// Splits a video into ⌊n/bag_len⌋ disjoint contiguous bags of
// bag_len/seg_len segments each. Trailing frames that do not fill a whole
// bag are dropped.
std::vector<Bag> make_bags(const Video& video, int bag_len = 512, int seg_len = 16);

enum class WeakLabel : int { normal = 0, corrupted = 1 };

// ---- corruption ground truth ----

enum class CorruptionKind : int {
  Flicker = 0,
  DisplayStride,
  Lines,
  GreenFlash,
  ColorSpaceChange,
  MessagePopup,
  MacroBlock,
  HalfScreen,
  BottomSplit,
  SuddenBlackout,
};

inline constexpr std::array<CorruptionKind, 10> kAllCorruptionKinds = {
    CorruptionKind::Flicker,        CorruptionKind::DisplayStride,
    CorruptionKind::Lines,          CorruptionKind::GreenFlash,
    CorruptionKind::ColorSpaceChange, CorruptionKind::MessagePopup,
    CorruptionKind::MacroBlock,     CorruptionKind::HalfScreen,
    CorruptionKind::BottomSplit,    CorruptionKind::SuddenBlackout,
};

const char* to_string(CorruptionKind kind);
CorruptionKind corruption_kind_from_string(const std::string& name);

struct CorruptionEvent {
  CorruptionKind kind = CorruptionKind::GreenFlash;
  int start_frame = 0;
  int duration = 1;
  // Kind-specific scalars (stride offset, line spacing, split fraction, ...).
  std::map<std::string, double> params;
  // Drives any per-event randomness (MacroBlock fills).
  uint64_t sub_seed = 0;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  bool overlaps(int frame_begin, int frame_end) const {
    return start_frame < frame_end && start_frame + duration > frame_begin;
  }
};

// ---- dataset manifest ----

struct ManifestEntry {
  std::string path;  // relative to the manifest file
  int label = 0;     // WeakLabel value
  std::string split = "train";
  std::vector<CorruptionEvent> events;  // ground truth, synthetic data only
};

struct DatasetManifest {
  uint64_t seed = 0;
  std::vector<ManifestEntry> videos;
  std::string root;  // directory of the manifest file; not serialized

  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);

  std::string resolve(const ManifestEntry& entry) const;
  std::string to_json() const;
};

// ---- segment features ----

using FeatureVector = std::vector<double>;

// Per-segment feature vectors for one bag. Values are 64-bit in memory and
// 32-bit IEEE-754 little-endian on disk.
struct FeatureBag {
  std::string bag_id;
  std::vector<FeatureVector> vectors;

  size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }
  size_t segment_count() const { return vectors.size(); }
};

// WMIL feature file:
//   magic "WMIL" | u32 version=1 | u32 n_bags | u32 segs_per_bag | u32 dim |
//   n_bags * segs_per_bag * dim f32 little-endian, bag-major, then segment,
//   then dimension.
// All bags in one file share segs_per_bag and dim.
void save_features(const std::string& path, const std::vector<FeatureBag>& bags);
std::vector<FeatureBag> load_features(const std::string& path);

// Path helpers shared by the pipeline (manifest entry -> feature file name).
std::string path_stem(const std::string& path);

}  // namespace weakmil
