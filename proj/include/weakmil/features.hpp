#pragma once

#include <string>
#include <vector>

#include "weakmil/core.hpp"

namespace weakmil {

// Built-in descriptor layout: mean frame and temporal-difference frame, each
// area-averaged to 14x14x3, concatenated (mean first), scaled to [0,1].
inline constexpr int kDescriptorGrid = 14;
inline constexpr int kDescriptorDim = 2 * kDescriptorGrid * kDescriptorGrid * 3;  // 1176

// Deterministic stand-in for a frozen video backbone. Requires frames
// already resized to 112x112x3 and at least two frames per segment.
FeatureVector extract_segment_features(const Segment& segment);

FeatureBag extract_bag_features(const Bag& bag);

// Resizes frames to 112x112 when needed, splits into bags and extracts the
// built-in descriptor for every segment. Bag ids are "<video.id>#<index>".
std::vector<FeatureBag> extract_video_features(const Video& video, int bag_len = 512,
                                               int seg_len = 16);

// Loads precomputed features from a WMIL file (any dimension; 4096 for an
// external C3D-style extractor).
std::vector<FeatureBag> import_external_features(const std::string& path);

}  // namespace weakmil
