#include "weakmil/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "weakmil/common.hpp"

namespace weakmil {

const char* to_string(Motion motion) {
  switch (motion) {
    case Motion::DriftingGradient: return "DriftingGradient";
    case Motion::BouncingRects: return "BouncingRects";
    case Motion::ScrollingBars: return "ScrollingBars";
  }
  return "?";
}

Motion motion_from_string(const std::string& name) {
  for (Motion m : {Motion::DriftingGradient, Motion::BouncingRects, Motion::ScrollingBars}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("configuration error: unknown motion '" + name + "'");
}

namespace {

uint8_t clamp_byte(double v) { return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0)); }

double frac(double x) { return x - std::floor(x); }

// Triangular wave in [0,1] with period 1.
double tri(double x) { return 2.0 * std::fabs(frac(x) - 0.5); }

struct GradientScene {
  double ux, uy, speed;
  double c0[3], c1[3];
};

GradientScene make_gradient_scene(SplitMix64& rng) {
  GradientScene s;
  const double angle = rng.next_double() * 6.283185307179586;
  s.ux = std::cos(angle);
  s.uy = std::sin(angle);
  s.speed = 0.01 + rng.next_double() * 0.02;
  // Force a wide swing on the red channel so one frame step always moves
  // some pixel by at least one sample step.
  s.c0[0] = static_cast<double>(rng.next_below(80));
  s.c1[0] = 170.0 + static_cast<double>(rng.next_below(80));
  for (int ch = 1; ch < 3; ++ch) {
    s.c0[ch] = static_cast<double>(rng.next_below(140));
    s.c1[ch] = 110.0 + static_cast<double>(rng.next_below(140));
  }
  return s;
}

void render_gradient(const GradientScene& s, int t, Frame& f) {
  const double inv_diag = 1.0 / (f.width + f.height);
  const double phase_t = t * s.speed;
  size_t idx = 0;
  for (int r = 0; r < f.height; ++r) {
    for (int c = 0; c < f.width; ++c) {
      const double m = tri((c * s.ux + r * s.uy) * inv_diag + phase_t);
      f.data[idx++] = clamp_byte(std::floor(s.c0[0] + (s.c1[0] - s.c0[0]) * m + 0.5));
      f.data[idx++] = clamp_byte(std::floor(s.c0[1] + (s.c1[1] - s.c0[1]) * m + 0.5));
      f.data[idx++] = clamp_byte(std::floor(s.c0[2] + (s.c1[2] - s.c0[2]) * m + 0.5));
    }
  }
}

struct RectScene {
  uint8_t bg0[3], bg1[3];
  struct Body {
    int h, w, x0, y0, vx, vy;
    uint8_t color[3];
  };
  std::vector<Body> rects;
};

RectScene make_rect_scene(SplitMix64& rng, int height, int width) {
  RectScene s;
  for (int ch = 0; ch < 3; ++ch) {
    s.bg0[ch] = static_cast<uint8_t>(rng.next_below(90));
    s.bg1[ch] = static_cast<uint8_t>(60 + rng.next_below(90));
  }
  const int n = 3;
  for (int i = 0; i < n; ++i) {
    RectScene::Body b;
    b.h = std::max(4, height / 6 + static_cast<int>(rng.next_below(std::max(1, height / 6))));
    b.w = std::max(4, width / 6 + static_cast<int>(rng.next_below(std::max(1, width / 6))));
    b.h = std::min(b.h, height - 1);
    b.w = std::min(b.w, width - 1);
    b.x0 = static_cast<int>(rng.next_below(std::max(1, width - b.w)));
    b.y0 = static_cast<int>(rng.next_below(std::max(1, height - b.h)));
    b.vx = 1 + static_cast<int>(rng.next_below(2));
    b.vy = 1 + static_cast<int>(rng.next_below(2));
    if (rng.next_below(2)) b.vx = -b.vx;
    if (rng.next_below(2)) b.vy = -b.vy;
    // Bright fills stay clearly above the dim background.
    for (int ch = 0; ch < 3; ++ch) b.color[ch] = static_cast<uint8_t>(180 + rng.next_below(76));
    s.rects.push_back(b);
  }
  return s;
}

// Position of a body bouncing in [0, range] after t steps, computed in
// closed form so frames are independent of each other.
int bounce(int start, int v, int t, int range) {
  if (range <= 0) return 0;
  long long x = start + static_cast<long long>(v) * t;
  const long long period = 2LL * range;
  x %= period;
  if (x < 0) x += period;
  return static_cast<int>(x <= range ? x : period - x);
}

void render_rects(const RectScene& s, int t, Frame& f) {
  for (int r = 0; r < f.height; ++r) {
    uint8_t row[3];
    for (int ch = 0; ch < 3; ++ch) {
      const double m = f.height > 1 ? static_cast<double>(r) / (f.height - 1) : 0.0;
      row[ch] = clamp_byte(std::floor(s.bg0[ch] + (s.bg1[ch] - s.bg0[ch]) * m + 0.5));
    }
    uint8_t* p = f.data.data() + static_cast<size_t>(r) * f.width * 3;
    for (int c = 0; c < f.width; ++c) {
      p[3 * c] = row[0];
      p[3 * c + 1] = row[1];
      p[3 * c + 2] = row[2];
    }
  }
  for (const auto& b : s.rects) {
    const int x = bounce(b.x0, b.vx, t, f.width - b.w);
    const int y = bounce(b.y0, b.vy, t, f.height - b.h);
    for (int r = y; r < y + b.h; ++r) {
      uint8_t* p = f.data.data() + (static_cast<size_t>(r) * f.width + x) * 3;
      for (int c = 0; c < b.w; ++c) {
        p[3 * c] = b.color[0];
        p[3 * c + 1] = b.color[1];
        p[3 * c + 2] = b.color[2];
      }
    }
  }
}

struct BarScene {
  std::vector<std::array<uint8_t, 3>> pattern;  // color per pattern column
  int speed;
  int bands;
};

BarScene make_bar_scene(SplitMix64& rng, int width) {
  BarScene s;
  s.speed = 1 + static_cast<int>(rng.next_below(3));
  s.bands = 3;
  const int n_bars = 5 + static_cast<int>(rng.next_below(4));
  std::array<uint8_t, 3> prev{0, 0, 0};
  for (int i = 0; i < n_bars; ++i) {
    const int bar_w = 6 + static_cast<int>(rng.next_below(11));
    std::array<uint8_t, 3> color;
    do {
      for (int ch = 0; ch < 3; ++ch) color[ch] = static_cast<uint8_t>(rng.next_below(256));
    } while (std::abs(int(color[0]) - int(prev[0])) + std::abs(int(color[1]) - int(prev[1])) +
                 std::abs(int(color[2]) - int(prev[2])) <
             60);
    for (int c = 0; c < bar_w; ++c) s.pattern.push_back(color);
    prev = color;
  }
  // Keep the period from being much larger than the frame.
  while (s.pattern.size() > static_cast<size_t>(2 * width) && s.pattern.size() > 16) {
    s.pattern.pop_back();
  }
  return s;
}

void render_bars(const BarScene& s, int t, Frame& f) {
  const int period = static_cast<int>(s.pattern.size());
  const int band_h = std::max(1, f.height / s.bands);
  for (int r = 0; r < f.height; ++r) {
    const int band = std::min(r / band_h, s.bands - 1);
    const int dir = (band % 2 == 0) ? 1 : -1;
    const int shift = dir * t * s.speed + band * 7;
    uint8_t* p = f.data.data() + static_cast<size_t>(r) * f.width * 3;
    for (int c = 0; c < f.width; ++c) {
      int k = (c + shift) % period;
      if (k < 0) k += period;
      p[3 * c] = s.pattern[k][0];
      p[3 * c + 1] = s.pattern[k][1];
      p[3 * c + 2] = s.pattern[k][2];
    }
  }
}

}  // namespace

Video render_base_video(const SceneSpec& spec, int n_frames, uint64_t seed) {
  if (n_frames < 1) throw ConfigError("configuration error: n_frames must be >= 1");
  if (spec.height < 16 || spec.width < 16) {
    throw ConfigError("configuration error: scene resolution must be at least 16x16");
  }
  SplitMix64 rng(derive_seed(seed, spec.palette_seed));
  Video video;
  video.frames.assign(static_cast<size_t>(n_frames), Frame(spec.height, spec.width));
  switch (spec.motion) {
    case Motion::DriftingGradient: {
      const GradientScene s = make_gradient_scene(rng);
      for (int t = 0; t < n_frames; ++t) render_gradient(s, t, video.frames[t]);
      break;
    }
    case Motion::BouncingRects: {
      const RectScene s = make_rect_scene(rng, spec.height, spec.width);
      for (int t = 0; t < n_frames; ++t) render_rects(s, t, video.frames[t]);
      break;
    }
    case Motion::ScrollingBars: {
      const BarScene s = make_bar_scene(rng, spec.width);
      for (int t = 0; t < n_frames; ++t) render_bars(s, t, video.frames[t]);
      break;
    }
  }
  return video;
}

// ---- corruption injection ----

namespace {

void corrupt_green_flash(Frame& f) {
  for (size_t i = 0; i < f.data.size(); i += 3) {
    f.data[i] = 0;
    f.data[i + 1] = 255;
    f.data[i + 2] = 0;
  }
}

void corrupt_blackout(Frame& f) { std::fill(f.data.begin(), f.data.end(), uint8_t{0}); }

void corrupt_half_screen(Frame& f) {
  const int half = (f.width + 1) / 2;  // left ⌈w/2⌉ columns
  for (int r = 0; r < f.height; ++r) {
    uint8_t* p = f.data.data() + static_cast<size_t>(r) * f.width * 3;
    std::memset(p, 0, static_cast<size_t>(half) * 3);
  }
}

void corrupt_bottom_split(Frame& f, double fraction) {
  const int k = static_cast<int>(std::ceil(fraction * f.height));
  if (fraction <= 0.0 || k < 1 || f.height - 2 * k < 0) {
    throw ConfigError("configuration error: BottomSplit fraction " + fmt_g17(fraction) +
                      " is invalid for height " + std::to_string(f.height));
  }
  const size_t row_bytes = static_cast<size_t>(f.width) * 3;
  uint8_t* base = f.data.data();
  std::memcpy(base + static_cast<size_t>(f.height - k) * row_bytes,
              base + static_cast<size_t>(f.height - 2 * k) * row_bytes, row_bytes * k);
}

void corrupt_lines(Frame& f, int spacing, bool vertical) {
  if (spacing < 1) throw ConfigError("configuration error: line spacing must be >= 1");
  if (vertical) {
    for (int r = 0; r < f.height; ++r) {
      uint8_t* p = f.data.data() + static_cast<size_t>(r) * f.width * 3;
      for (int c = 0; c < f.width; c += spacing) {
        p[3 * c] = p[3 * c + 1] = p[3 * c + 2] = 255;
      }
    }
  } else {
    for (int r = 0; r < f.height; r += spacing) {
      uint8_t* p = f.data.data() + static_cast<size_t>(r) * f.width * 3;
      std::fill(p, p + static_cast<size_t>(f.width) * 3, uint8_t{255});
    }
  }
}

void corrupt_flicker(Frame& f, double gain) {
  for (uint8_t& v : f.data) {
    v = clamp_byte(std::floor(gain * v + 0.5));
  }
}

void corrupt_display_stride(Frame& f, int offset) {
  if (offset < 0) throw ConfigError("configuration error: stride offset must be >= 0");
  std::vector<uint8_t> row(static_cast<size_t>(f.width) * 3);
  for (int r = 0; r < f.height; ++r) {
    const int shift = (r * offset) % f.width;
    if (shift == 0) continue;
    uint8_t* p = f.data.data() + static_cast<size_t>(r) * f.width * 3;
    std::memcpy(row.data(), p, row.size());
    for (int c = 0; c < f.width; ++c) {
      const int dst = (c + shift) % f.width;
      p[3 * dst] = row[3 * c];
      p[3 * dst + 1] = row[3 * c + 1];
      p[3 * dst + 2] = row[3 * c + 2];
    }
  }
}

void corrupt_color_space(Frame& f) {
  for (size_t i = 0; i < f.data.size(); i += 3) {
    const uint8_t r = f.data[i], g = f.data[i + 1], b = f.data[i + 2];
    f.data[i] = b;      // B -> R
    f.data[i + 1] = r;  // R -> G
    f.data[i + 2] = g;  // G -> B
  }
}

void corrupt_popup(Frame& f, int x, int y, int w, int h) {
  const int x0 = std::clamp(x, 0, f.width - 1);
  const int y0 = std::clamp(y, 0, f.height - 1);
  const int x1 = std::clamp(x + w, x0 + 1, f.width);
  const int y1 = std::clamp(y + h, y0 + 1, f.height);
  for (int r = y0; r < y1; ++r) {
    uint8_t* p = f.data.data() + static_cast<size_t>(r) * f.width * 3;
    for (int c = x0; c < x1; ++c) {
      const bool border = (r == y0 || r == y1 - 1 || c == x0 || c == x1 - 1);
      const uint8_t v = border ? 0 : 200;
      p[3 * c] = p[3 * c + 1] = p[3 * c + 2] = v;
    }
  }
}

struct Block {
  int top, left;
  uint8_t color[3];
};

std::vector<Block> macro_blocks(const CorruptionEvent& event, int height, int width) {
  if (height < 16 || width < 16) {
    throw ConfigError("configuration error: MacroBlock requires frames of at least 16x16");
  }
  const int n = std::max(1, static_cast<int>(event.param("blocks", 8)));
  SplitMix64 rng(event.sub_seed);
  std::vector<Block> blocks(n);
  for (Block& b : blocks) {
    b.top = static_cast<int>(rng.next_below(height - 16 + 1));
    b.left = static_cast<int>(rng.next_below(width - 16 + 1));
    for (int ch = 0; ch < 3; ++ch) b.color[ch] = static_cast<uint8_t>(rng.next_below(256));
  }
  return blocks;
}

void corrupt_macro_block(Frame& f, const std::vector<Block>& blocks) {
  for (const Block& b : blocks) {
    for (int r = b.top; r < b.top + 16; ++r) {
      uint8_t* p = f.data.data() + (static_cast<size_t>(r) * f.width + b.left) * 3;
      for (int c = 0; c < 16; ++c) {
        p[3 * c] = b.color[0];
        p[3 * c + 1] = b.color[1];
        p[3 * c + 2] = b.color[2];
      }
    }
  }
}

}  // namespace

Video inject(const Video& video, const CorruptionEvent& event) {
  const int n = static_cast<int>(video.frames.size());
  if (event.duration < 1 || event.start_frame < 0 || event.start_frame + event.duration > n) {
    throw DataError("range error: event [" + std::to_string(event.start_frame) + ", " +
                    std::to_string(event.start_frame + event.duration) + ") outside video of " +
                    std::to_string(n) + " frames");
  }
  Video out = video;
  const int h = video.height();
  const int w = video.width();

  std::vector<Block> blocks;
  if (event.kind == CorruptionKind::MacroBlock) blocks = macro_blocks(event, h, w);

  const int px = static_cast<int>(event.param("x", (w - std::max(8, 2 * w / 5)) / 2));
  const int py = static_cast<int>(event.param("y", (h - std::max(8, h / 4)) / 2));
  const int pw = static_cast<int>(event.param("w", std::max(8, 2 * w / 5)));
  const int ph = static_cast<int>(event.param("h", std::max(8, h / 4)));

  for (int t = event.start_frame; t < event.start_frame + event.duration; ++t) {
    Frame& f = out.frames[t];
    switch (event.kind) {
      case CorruptionKind::GreenFlash:
        corrupt_green_flash(f);
        break;
      case CorruptionKind::SuddenBlackout:
        corrupt_blackout(f);
        break;
      case CorruptionKind::HalfScreen:
        corrupt_half_screen(f);
        break;
      case CorruptionKind::BottomSplit:
        corrupt_bottom_split(f, event.param("fraction", 0.4));
        break;
      case CorruptionKind::Lines:
        corrupt_lines(f, static_cast<int>(event.param("spacing", 8)),
                      event.param("vertical", 1.0) >= 0.5);
        break;
      case CorruptionKind::Flicker:
        if ((t - event.start_frame) % 2 == 0) corrupt_flicker(f, event.param("gain", 1.6));
        break;
      case CorruptionKind::DisplayStride:
        corrupt_display_stride(f, static_cast<int>(event.param("offset", 7)));
        break;
      case CorruptionKind::ColorSpaceChange:
        corrupt_color_space(f);
        break;
      case CorruptionKind::MessagePopup:
        corrupt_popup(f, px, py, pw, ph);
        break;
      case CorruptionKind::MacroBlock:
        corrupt_macro_block(f, blocks);
        break;
    }
  }
  return out;
}

std::pair<int, int> event_duration_range(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::GreenFlash: return {1, 3};
    case CorruptionKind::SuddenBlackout: return {8, 48};
    default: return {16, 128};
  }
}

CorruptionEvent random_event(const std::vector<CorruptionKind>& kinds, int n_frames,
                             int height, int width, uint64_t event_seed) {
  if (kinds.empty()) throw ConfigError("configuration error: no corruption kinds to draw from");
  if (n_frames < 1) throw ConfigError("configuration error: empty video extent");
  SplitMix64 rng(event_seed);
  CorruptionEvent event;
  event.kind = kinds[rng.next_below(kinds.size())];
  auto [dmin, dmax] = event_duration_range(event.kind);
  dmin = std::min(dmin, n_frames);
  dmax = std::min(dmax, n_frames);
  event.duration = dmin + static_cast<int>(rng.next_below(static_cast<uint64_t>(dmax - dmin + 1)));
  event.start_frame = static_cast<int>(rng.next_below(static_cast<uint64_t>(n_frames - event.duration + 1)));
  switch (event.kind) {
    case CorruptionKind::Flicker:
      event.params["gain"] = 1.6;
      break;
    case CorruptionKind::DisplayStride:
      event.params["offset"] = 7;
      break;
    case CorruptionKind::Lines:
      event.params["spacing"] = 8;
      event.params["vertical"] = static_cast<double>(rng.next_below(2));
      break;
    case CorruptionKind::BottomSplit:
      event.params["fraction"] = 0.4;
      break;
    case CorruptionKind::MessagePopup: {
      const int pw = std::max(8, width / 5 + static_cast<int>(rng.next_below(std::max(1, width / 4))));
      const int ph = std::max(8, height / 6 + static_cast<int>(rng.next_below(std::max(1, height / 5))));
      event.params["w"] = std::min(pw, width);
      event.params["h"] = std::min(ph, height);
      event.params["x"] = static_cast<double>(rng.next_below(width - static_cast<int>(event.params["w"]) + 1));
      event.params["y"] = static_cast<double>(rng.next_below(height - static_cast<int>(event.params["h"]) + 1));
      break;
    }
    case CorruptionKind::MacroBlock:
      event.params["blocks"] = 8;
      break;
    default:
      break;
  }
  event.sub_seed = rng.next();
  return event;
}

void GeneratorConfig::validate() const {
  if (p_corrupt < 0.0 || p_corrupt > 1.0) {
    throw ConfigError("configuration error: p_corrupt must lie in [0, 1]");
  }
  if (frames_per_video < 1) {
    throw ConfigError("configuration error: frames_per_video must be >= 1");
  }
  if (height < 16 || width < 16) {
    throw ConfigError("configuration error: resolution must be at least 16x16");
  }
  if (events_min < 1 || events_max < events_min) {
    throw ConfigError("configuration error: events_per_positive range is invalid");
  }
  if (splits.empty()) throw ConfigError("configuration error: at least one split required");
  for (const SplitPlan& split : splits) {
    if (split.name.empty()) throw ConfigError("configuration error: split name is empty");
    if (split.corrupted < 0 || split.normal < 0) {
      throw ConfigError("configuration error: split counts must be >= 0");
    }
  }
}

DatasetManifest generate_dataset(const GeneratorConfig& config, const std::string& out_dir) {
  config.validate();
  ensure_dir(out_dir + "/videos");

  DatasetManifest manifest;
  manifest.seed = config.seed;
  manifest.root = out_dir;

  uint64_t video_index = 0;
  for (const SplitPlan& split : config.splits) {
    const std::vector<CorruptionKind> kinds =
        split.kinds.empty()
            ? std::vector<CorruptionKind>(kAllCorruptionKinds.begin(), kAllCorruptionKinds.end())
            : split.kinds;
    const int total = split.corrupted + split.normal;
    for (int v = 0; v < total; ++v, ++video_index) {
      const int label = v < split.corrupted ? 1 : 0;
      const uint64_t video_seed = derive_seed(config.seed, video_index);
      SplitMix64 vrng(video_seed);

      SceneSpec spec;
      spec.height = config.height;
      spec.width = config.width;
      spec.motion = static_cast<Motion>(vrng.next_below(3));
      spec.palette_seed = vrng.next();

      char name[64];
      std::snprintf(name, sizeof(name), "%s_%c%04d", split.name.c_str(), label ? 'c' : 'n',
                    label ? v : v - split.corrupted);

      Video video = render_base_video(spec, config.frames_per_video, video_seed);
      video.id = name;

      ManifestEntry entry;
      entry.path = std::string("videos/") + name + ".wmvd";
      entry.label = label;
      entry.split = split.name;

      if (label == 1 && vrng.next_double() < config.p_corrupt) {
        const int n_events =
            config.events_min +
            static_cast<int>(vrng.next_below(static_cast<uint64_t>(config.events_max - config.events_min + 1)));
        for (int e = 0; e < n_events; ++e) {
          CorruptionEvent event = random_event(kinds, config.frames_per_video, config.height,
                                               config.width, derive_seed(video_seed, e + 1));
          video = inject(video, event);
          entry.events.push_back(std::move(event));
        }
      }

      save_video(out_dir + "/" + entry.path, video);
      manifest.videos.push_back(std::move(entry));
    }
  }

  manifest.save(out_dir + "/manifest.json");
  return manifest;
}

}  // namespace weakmil
