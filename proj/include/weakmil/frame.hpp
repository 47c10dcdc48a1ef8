#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace weakmil {

// One RGB frame. Samples are 8-bit, row-major, channel-interleaved (R,G,B).
struct Frame {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  Frame() = default;
  Frame(int h, int w, uint8_t fill = 0)
      : height(h), width(w), data(static_cast<size_t>(h) * w * kChannels, fill) {}

  uint8_t& at(int r, int c, int ch) {
    return data[(static_cast<size_t>(r) * width + c) * kChannels + ch];
  }
  uint8_t at(int r, int c, int ch) const {
    return data[(static_cast<size_t>(r) * width + c) * kChannels + ch];
  }

  bool same_shape(const Frame& o) const { return height == o.height && width == o.width; }
};

struct Video {
  std::string id;
  std::vector<Frame> frames;

  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  size_t frame_count() const { return frames.size(); }
};

// Area-average resampling of a channel-interleaved double plane. Each output
// cell is the area-weighted mean of its (possibly fractional) source box.
void resize_area(const double* src, int in_h, int in_w, int channels,
                 double* dst, int out_h, int out_w);

// Area-average resize of an 8-bit frame; means are computed in double and
// rounded half-up to 8 bits. Identity sizes return the input byte-for-byte.
Frame resize_frame(const Frame& frame, int out_h = 112, int out_w = 112);

// ---- video I/O ----
//
// The on-disk container ("WMVD") is deliberately minimal:
//   magic "WMVD" | u32 version=1 | u32 n_frames | u32 height | u32 width |
//   u32 channels=3 | n_frames * height * width * 3 raw samples
// all integers little-endian. load_video also accepts a directory of binary
// PPM (P6, maxval 255) files, read in lexicographic order.

void save_video(const std::string& path, const Video& video);
Video load_video(const std::string& path);

Frame load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Frame& frame);

}  // namespace weakmil
