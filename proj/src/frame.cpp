#include "weakmil/frame.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "weakmil/common.hpp"

namespace weakmil {

namespace {

// (source index, overlap length) pairs of one output cell's box along one
// axis. Boxes are [i*scale, (i+1)*scale) in source coordinates.
struct AxisTap {
  int first = 0;
  std::vector<double> weights;
};

std::string stem_of(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

std::vector<AxisTap> axis_taps(int in_size, int out_size) {
  std::vector<AxisTap> taps(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    int first = static_cast<int>(std::floor(lo));
    int last = static_cast<int>(std::ceil(hi)) - 1;
    first = std::clamp(first, 0, in_size - 1);
    last = std::clamp(last, first, in_size - 1);
    AxisTap tap;
    tap.first = first;
    tap.weights.reserve(static_cast<size_t>(last - first + 1));
    for (int s = first; s <= last; ++s) {
      double ov = std::min<double>(s + 1, hi) - std::max<double>(s, lo);
      tap.weights.push_back(ov > 0 ? ov : 0.0);
    }
    taps[i] = std::move(tap);
  }
  return taps;
}

}  // namespace

void resize_area(const double* src, int in_h, int in_w, int channels,
                 double* dst, int out_h, int out_w) {
  if (in_h <= 0 || in_w <= 0 || out_h <= 0 || out_w <= 0) {
    throw DataError("empty-input error: resize requires nonzero dimensions");
  }
  const auto rows = axis_taps(in_h, out_h);
  const auto cols = axis_taps(in_w, out_w);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      for (int ch = 0; ch < channels; ++ch) {
        double acc = 0.0;
        double wsum = 0.0;
        for (size_t ri = 0; ri < rows[i].weights.size(); ++ri) {
          const int r = rows[i].first + static_cast<int>(ri);
          const double wr = rows[i].weights[ri];
          const double* row = src + (static_cast<size_t>(r) * in_w) * channels;
          for (size_t ci = 0; ci < cols[j].weights.size(); ++ci) {
            const int c = cols[j].first + static_cast<int>(ci);
            const double w = wr * cols[j].weights[ci];
            acc += w * row[static_cast<size_t>(c) * channels + ch];
            wsum += w;
          }
        }
        dst[(static_cast<size_t>(i) * out_w + j) * channels + ch] = acc / wsum;
      }
    }
  }
}

Frame resize_frame(const Frame& frame, int out_h, int out_w) {
  if (frame.height <= 0 || frame.width <= 0) {
    throw DataError("empty-input error: cannot resize a zero-dimension frame");
  }
  if (out_h <= 0 || out_w <= 0) {
    throw ConfigError("configuration error: resize target must be positive");
  }
  if (frame.height == out_h && frame.width == out_w) return frame;

  std::vector<double> src(frame.data.begin(), frame.data.end());
  std::vector<double> dst(static_cast<size_t>(out_h) * out_w * Frame::kChannels);
  resize_area(src.data(), frame.height, frame.width, Frame::kChannels, dst.data(), out_h, out_w);

  Frame out(out_h, out_w);
  for (size_t i = 0; i < dst.size(); ++i) {
    double v = std::floor(dst[i] + 0.5);  // round half-up
    out.data[i] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

// ---- WMVD container ----

static constexpr char kVideoMagic[4] = {'W', 'M', 'V', 'D'};
static constexpr uint32_t kVideoVersion = 1;

void save_video(const std::string& path, const Video& video) {
  for (const Frame& f : video.frames) {
    if (!f.same_shape(video.frames.front())) {
      throw DataError("shape error: all frames of a video must share dimensions");
    }
  }
  std::string out;
  const size_t frame_bytes =
      static_cast<size_t>(video.height()) * video.width() * Frame::kChannels;
  out.reserve(24 + frame_bytes * video.frames.size());
  out.append(kVideoMagic, 4);
  bin::put_u32(out, kVideoVersion);
  bin::put_u32(out, static_cast<uint32_t>(video.frames.size()));
  bin::put_u32(out, static_cast<uint32_t>(video.height()));
  bin::put_u32(out, static_cast<uint32_t>(video.width()));
  bin::put_u32(out, Frame::kChannels);
  for (const Frame& f : video.frames) {
    out.append(reinterpret_cast<const char*>(f.data.data()), f.data.size());
  }
  write_file(path, out);
}

static Video load_video_container(const std::string& path) {
  const std::string bytes = read_file(path);
  bin::Reader r(bytes, "video file '" + path + "'");
  r.expect_header(kVideoMagic, kVideoVersion);
  const uint32_t n_frames = r.u32();
  const uint32_t height = r.u32();
  const uint32_t width = r.u32();
  const uint32_t channels = r.u32();
  if (channels != Frame::kChannels) {
    throw DataError("format error: video file '" + path + "' has " + std::to_string(channels) +
                    " channels, expected 3");
  }
  Video video;
  video.id = stem_of(path);
  video.frames.reserve(n_frames);
  for (uint32_t i = 0; i < n_frames; ++i) {
    Frame f(static_cast<int>(height), static_cast<int>(width));
    r.raw(f.data.data(), f.data.size());
    video.frames.push_back(std::move(f));
  }
  r.expect_exhausted();
  return video;
}

static Video load_video_ppm_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      files.push_back(entry.path().string());
    }
  }
  if (files.empty()) throw DataError("empty-input error: no .ppm frames in '" + dir + "'");
  std::sort(files.begin(), files.end());
  Video video;
  video.id = stem_of(dir);
  video.frames.reserve(files.size());
  for (const std::string& f : files) {
    video.frames.push_back(load_ppm(f));
    if (!video.frames.back().same_shape(video.frames.front())) {
      throw DataError("shape error: frame '" + f + "' does not match the first frame");
    }
  }
  return video;
}

Video load_video(const std::string& path) {
  if (std::filesystem::is_directory(path)) return load_video_ppm_dir(path);
  return load_video_container(path);
}

// ---- PPM (P6, maxval 255) ----

Frame load_ppm(const std::string& path) {
  const std::string bytes = read_file(path);
  size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P6") throw DataError("format error: '" + path + "' is not a binary PPM");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw DataError("format error: bad PPM header in '" + path + "'");
  }
  if (maxval != 255) throw DataError("format error: PPM maxval must be 255 in '" + path + "'");
  if (width <= 0 || height <= 0) throw DataError("format error: bad PPM size in '" + path + "'");
  ++pos;  // single whitespace after maxval
  Frame f(height, width);
  if (bytes.size() - pos < f.data.size()) {
    throw DataError("corruption error: PPM payload truncated in '" + path + "'");
  }
  std::memcpy(f.data.data(), bytes.data() + pos, f.data.size());
  return f;
}

void save_ppm(const std::string& path, const Frame& frame) {
  std::string out = "P6\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(frame.data.data()), frame.data.size());
  write_file(path, out);
}

}  // namespace weakmil
