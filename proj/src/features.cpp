#include "weakmil/features.hpp"

#include <cmath>
#include <cstdlib>

#include "weakmil/common.hpp"

namespace weakmil {

namespace {

constexpr int kSide = 112;
constexpr int kPlane = kSide * kSide * 3;

}  // namespace

FeatureVector extract_segment_features(const Segment& segment) {
  const size_t n = segment.frames.size();
  if (n < 2) {
    throw DataError("shape error: segment needs at least 2 frames, has " + std::to_string(n));
  }
  for (const Frame& f : segment.frames) {
    if (f.height != kSide || f.width != kSide) {
      throw DataError("shape error: segment frames must be 112x112x3, got " +
                      std::to_string(f.height) + "x" + std::to_string(f.width));
    }
  }

  // Mean frame and mean absolute temporal difference, per pixel per channel.
  std::vector<double> mean(kPlane, 0.0);
  std::vector<double> diff(kPlane, 0.0);
  for (size_t t = 0; t < n; ++t) {
    const uint8_t* cur = segment.frames[t].data.data();
    for (int i = 0; i < kPlane; ++i) mean[i] += cur[i];
    if (t > 0) {
      const uint8_t* prev = segment.frames[t - 1].data.data();
      for (int i = 0; i < kPlane; ++i) diff[i] += std::abs(int(cur[i]) - int(prev[i]));
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_d = 1.0 / static_cast<double>(n - 1);
  for (int i = 0; i < kPlane; ++i) {
    mean[i] *= inv_n;
    diff[i] *= inv_d;
  }

  constexpr int g = kDescriptorGrid;
  std::vector<double> mean_small(g * g * 3), diff_small(g * g * 3);
  resize_area(mean.data(), kSide, kSide, 3, mean_small.data(), g, g);
  resize_area(diff.data(), kSide, kSide, 3, diff_small.data(), g, g);

  FeatureVector out(kDescriptorDim);
  for (int i = 0; i < g * g * 3; ++i) out[i] = mean_small[i] / 255.0;
  for (int i = 0; i < g * g * 3; ++i) out[g * g * 3 + i] = diff_small[i] / 255.0;
  return out;
}

FeatureBag extract_bag_features(const Bag& bag) {
  FeatureBag fb;
  fb.bag_id = bag.source_id + "#" + std::to_string(bag.start_frame);
  fb.vectors.reserve(bag.segments.size());
  for (const Segment& seg : bag.segments) fb.vectors.push_back(extract_segment_features(seg));
  return fb;
}

std::vector<FeatureBag> extract_video_features(const Video& video, int bag_len, int seg_len) {
  const Video* source = &video;
  Video resized;
  if (video.height() != kSide || video.width() != kSide) {
    resized.id = video.id;
    resized.frames.reserve(video.frames.size());
    for (const Frame& f : video.frames) resized.frames.push_back(resize_frame(f, kSide, kSide));
    source = &resized;
  }
  std::vector<FeatureBag> out;
  if (source->frames.size() < static_cast<size_t>(bag_len)) return out;
  std::vector<Bag> bags = make_bags(*source, bag_len, seg_len);
  out.reserve(bags.size());
  for (size_t b = 0; b < bags.size(); ++b) {
    FeatureBag fb = extract_bag_features(bags[b]);
    fb.bag_id = video.id + "#" + std::to_string(b);
    out.push_back(std::move(fb));
  }
  return out;
}

std::vector<FeatureBag> import_external_features(const std::string& path) {
  std::vector<FeatureBag> bags = load_features(path);
  for (const FeatureBag& bag : bags) {
    for (const FeatureVector& v : bag.vectors) {
      for (double x : v) {
        if (!std::isfinite(x)) {
          throw DataError("format error: non-finite feature value in '" + path + "'");
        }
      }
    }
  }
  return bags;
}

}  // namespace weakmil
