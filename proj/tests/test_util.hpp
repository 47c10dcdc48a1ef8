#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "weakmil/common.hpp"
#include "weakmil/core.hpp"
#include "weakmil/frame.hpp"

namespace weakmil::testing {

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("weakmil_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline Frame random_frame(SplitMix64& rng, int h, int w) {
  Frame f(h, w);
  for (auto& v : f.data) v = static_cast<uint8_t>(rng.next_below(256));
  return f;
}

inline Video random_video(SplitMix64& rng, int n_frames, int h, int w,
                          const std::string& id = "rand") {
  Video video;
  video.id = id;
  video.frames.reserve(static_cast<size_t>(n_frames));
  for (int t = 0; t < n_frames; ++t) video.frames.push_back(random_frame(rng, h, w));
  return video;
}

// Frame stamped with its index so partitions are checkable byte-wise.
inline Video indexed_video(int n_frames, int h, int w, const std::string& id = "idx") {
  Video video;
  video.id = id;
  for (int t = 0; t < n_frames; ++t) {
    Frame f(h, w);
    for (size_t i = 0; i < f.data.size(); ++i) {
      f.data[i] = static_cast<uint8_t>((t * 31 + static_cast<int>(i)) % 251);
    }
    video.frames.push_back(std::move(f));
  }
  return video;
}

inline FeatureBag random_feature_bag(SplitMix64& rng, int segments, int dim,
                                     const std::string& id = "bag") {
  FeatureBag bag;
  bag.bag_id = id;
  for (int s = 0; s < segments; ++s) {
    FeatureVector v(static_cast<size_t>(dim));
    for (double& x : v) x = rng.next_double();
    bag.vectors.push_back(std::move(v));
  }
  return bag;
}

}  // namespace weakmil::testing
