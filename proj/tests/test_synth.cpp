#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "weakmil/features.hpp"
#include "weakmil/synth.hpp"

#include "test_util.hpp"

using namespace weakmil;
using testing::TempDir;

namespace {

bool videos_equal(const Video& a, const Video& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (size_t t = 0; t < a.frames.size(); ++t) {
    if (a.frames[t].data != b.frames[t].data) return false;
  }
  return true;
}

double l2_sq(const FeatureVector& a, const FeatureVector& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

CorruptionEvent event_of(CorruptionKind kind, int start, int duration, uint64_t sub_seed = 42) {
  CorruptionEvent e;
  e.kind = kind;
  e.start_frame = start;
  e.duration = duration;
  e.sub_seed = sub_seed;
  return e;
}

}  // namespace

TEST_CASE("render_base_video is deterministic and seed-sensitive") {
  for (Motion motion : {Motion::DriftingGradient, Motion::BouncingRects, Motion::ScrollingBars}) {
    SceneSpec spec;
    spec.height = 48;
    spec.width = 64;
    spec.motion = motion;
    spec.palette_seed = 5;
    const Video a = render_base_video(spec, 20, 1);
    const Video b = render_base_video(spec, 20, 1);
    CHECK(videos_equal(a, b));
    const Video c = render_base_video(spec, 20, 2);
    CHECK_FALSE(videos_equal(a, c));
  }
}

TEST_CASE("render_base_video produces non-static content for every motion") {
  for (Motion motion : {Motion::DriftingGradient, Motion::BouncingRects, Motion::ScrollingBars}) {
    for (uint64_t seed : {1ull, 2ull, 3ull, 99ull}) {
      SceneSpec spec;
      spec.motion = motion;
      spec.palette_seed = seed * 13 + 1;
      const Video v = render_base_video(spec, 24, seed);
      for (size_t t = 1; t < v.frames.size(); ++t) {
        CHECK(v.frames[t].data != v.frames[t - 1].data);
      }
    }
  }
}

TEST_CASE("render_base_video handles a single frame and rejects empty requests") {
  SceneSpec spec;
  CHECK(render_base_video(spec, 1, 3).frames.size() == 1);
  CHECK_THROWS_AS(render_base_video(spec, 0, 3), ConfigError);
  spec.height = 8;
  CHECK_THROWS_AS(render_base_video(spec, 4, 3), ConfigError);
}

TEST_CASE("GreenFlash rewrites exactly the event frames to pure green") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 16, 7);
  const Video out = inject(base, event_of(CorruptionKind::GreenFlash, 10, 2));
  for (int t : {10, 11}) {
    for (size_t i = 0; i < out.frames[t].data.size(); i += 3) {
      CHECK(out.frames[t].data[i] == 0);
      CHECK(out.frames[t].data[i + 1] == 255);
      CHECK(out.frames[t].data[i + 2] == 0);
    }
  }
  CHECK(out.frames[9].data == base.frames[9].data);
  CHECK(out.frames[12].data == base.frames[12].data);
}

TEST_CASE("SuddenBlackout zeroes a run of consecutive frames") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 12, 5);
  const Video out = inject(base, event_of(CorruptionKind::SuddenBlackout, 4, 3));
  for (int t : {4, 5, 6}) {
    for (uint8_t v : out.frames[t].data) CHECK(v == 0);
  }
  CHECK(out.frames[3].data == base.frames[3].data);
  CHECK(out.frames[7].data == base.frames[7].data);
}

TEST_CASE("HalfScreen blanks the left ceil(w/2) columns and nothing else") {
  SceneSpec spec;  // 112x112
  const Video base = render_base_video(spec, 4, 9);
  const Video out = inject(base, event_of(CorruptionKind::HalfScreen, 1, 1));
  const Frame& f = out.frames[1];
  for (int r = 0; r < f.height; ++r) {
    for (int c = 0; c < 56; ++c) {
      for (int ch = 0; ch < 3; ++ch) CHECK(f.at(r, c, ch) == 0);
    }
    for (int c = 56; c < 112; ++c) {
      for (int ch = 0; ch < 3; ++ch) CHECK(f.at(r, c, ch) == base.frames[1].at(r, c, ch));
    }
  }
}

TEST_CASE("BottomSplit duplicates the rows immediately above the split") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 3, 11);
  CorruptionEvent e = event_of(CorruptionKind::BottomSplit, 1, 1);
  e.params["fraction"] = 0.25;  // 28 rows of 112
  const Video out = inject(base, e);
  const Frame& f = out.frames[1];
  const Frame& src = base.frames[1];
  for (int r = 0; r < 112 - 28; ++r) {
    for (int c = 0; c < 112; ++c) {
      for (int ch = 0; ch < 3; ++ch) CHECK(f.at(r, c, ch) == src.at(r, c, ch));
    }
  }
  for (int r = 112 - 28; r < 112; ++r) {
    for (int c = 0; c < 112; ++c) {
      for (int ch = 0; ch < 3; ++ch) CHECK(f.at(r, c, ch) == src.at(r - 28, c, ch));
    }
  }
  e.params["fraction"] = 0.75;  // 2*ceil(f*h) > h
  CHECK_THROWS_AS(inject(base, e), ConfigError);
}

TEST_CASE("Lines paints every k-th column (or row) white") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 2, 13);
  CorruptionEvent e = event_of(CorruptionKind::Lines, 0, 1);
  e.params["spacing"] = 8;
  e.params["vertical"] = 1;
  Video out = inject(base, e);
  for (int r = 0; r < 112; ++r) {
    for (int c = 0; c < 112; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        if (c % 8 == 0) {
          CHECK(out.frames[0].at(r, c, ch) == 255);
        } else {
          CHECK(out.frames[0].at(r, c, ch) == base.frames[0].at(r, c, ch));
        }
      }
    }
  }
  e.params["vertical"] = 0;
  out = inject(base, e);
  for (int r = 0; r < 112; r += 8) {
    for (int c = 0; c < 112; ++c) CHECK(out.frames[0].at(r, c, 0) == 255);
  }
}

TEST_CASE("Flicker scales every other frame with clamping") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 6, 17);
  CorruptionEvent e = event_of(CorruptionKind::Flicker, 2, 3);
  e.params["gain"] = 1.6;
  const Video out = inject(base, e);
  for (int t : {2, 4}) {  // scaled frames (even offset)
    for (size_t i = 0; i < out.frames[t].data.size(); ++i) {
      const double want = std::min(255.0, std::floor(1.6 * base.frames[t].data[i] + 0.5));
      CHECK(out.frames[t].data[i] == static_cast<uint8_t>(want));
    }
  }
  CHECK(out.frames[3].data == base.frames[3].data);  // odd offset untouched
}

TEST_CASE("DisplayStride shifts row r circularly by (r*delta) mod w") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 2, 19);
  CorruptionEvent e = event_of(CorruptionKind::DisplayStride, 0, 1);
  e.params["offset"] = 7;
  const Video out = inject(base, e);
  for (int r = 0; r < 112; ++r) {
    const int shift = (r * 7) % 112;
    for (int c = 0; c < 112; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        CHECK(out.frames[0].at(r, (c + shift) % 112, ch) == base.frames[0].at(r, c, ch));
      }
    }
  }
}

TEST_CASE("ColorSpaceChange permutes channels R->G->B->R") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 2, 23);
  const Video out = inject(base, event_of(CorruptionKind::ColorSpaceChange, 0, 1));
  const Frame& f = out.frames[0];
  const Frame& src = base.frames[0];
  for (int r = 0; r < f.height; ++r) {
    for (int c = 0; c < f.width; ++c) {
      CHECK(f.at(r, c, 1) == src.at(r, c, 0));  // R -> G
      CHECK(f.at(r, c, 2) == src.at(r, c, 1));  // G -> B
      CHECK(f.at(r, c, 0) == src.at(r, c, 2));  // B -> R
    }
  }
}

TEST_CASE("MessagePopup draws a filled rectangle with a 1px black border") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 2, 29);
  CorruptionEvent e = event_of(CorruptionKind::MessagePopup, 0, 1);
  e.params["x"] = 10;
  e.params["y"] = 20;
  e.params["w"] = 30;
  e.params["h"] = 15;
  const Video out = inject(base, e);
  const Frame& f = out.frames[0];
  for (int r = 20; r < 35; ++r) {
    for (int c = 10; c < 40; ++c) {
      const bool border = r == 20 || r == 34 || c == 10 || c == 39;
      for (int ch = 0; ch < 3; ++ch) CHECK(f.at(r, c, ch) == (border ? 0 : 200));
    }
  }
  CHECK(f.at(19, 10, 0) == base.frames[0].at(19, 10, 0));
  CHECK(f.at(20, 9, 0) == base.frames[0].at(20, 9, 0));
}

TEST_CASE("MacroBlock paints deterministic 16x16 blocks from the sub-seed") {
  // Static gray base, so any pixel change is a painted block.
  Video base;
  base.id = "gray";
  base.frames.assign(4, Frame(112, 112, 90));
  CorruptionEvent e = event_of(CorruptionKind::MacroBlock, 1, 2, 777);
  e.params["blocks"] = 4;
  const Video a = inject(base, e);
  const Video b = inject(base, e);
  CHECK(videos_equal(a, b));
  CHECK(a.frames[1].data == a.frames[2].data);  // same blocks across the event
  CHECK(a.frames[0].data == base.frames[0].data);
  CHECK(a.frames[3].data == base.frames[3].data);

  CorruptionEvent e2 = e;
  e2.sub_seed = 778;
  const Video c = inject(base, e2);
  CHECK(c.frames[1].data != a.frames[1].data);

  // painted area is positive and bounded by blocks * 16 * 16
  size_t changed = 0;
  for (int r = 0; r < 112; ++r) {
    for (int col = 0; col < 112; ++col) {
      changed += a.frames[1].at(r, col, 0) != 90 || a.frames[1].at(r, col, 1) != 90 ||
                 a.frames[1].at(r, col, 2) != 90;
    }
  }
  CHECK(changed > 0);
  CHECK(changed <= 4 * 256);
}

TEST_CASE("inject never touches frames outside the event window") {
  SceneSpec spec;
  spec.height = 64;
  spec.width = 80;
  SplitMix64 rng(404);
  const Video base = render_base_video(spec, 40, 1234);
  for (CorruptionKind kind : kAllCorruptionKinds) {
    const CorruptionEvent e = random_event({kind}, 40, 64, 80, rng.next());
    const Video out = inject(base, e);
    REQUIRE(out.frames.size() == base.frames.size());
    for (int t = 0; t < 40; ++t) {
      if (t < e.start_frame || t >= e.start_frame + e.duration) {
        CHECK(out.frames[t].data == base.frames[t].data);
      }
    }
  }
}

TEST_CASE("inject rejects events outside the video extent") {
  SceneSpec spec;
  const Video base = render_base_video(spec, 8, 2);
  CHECK_THROWS_AS(inject(base, event_of(CorruptionKind::GreenFlash, 7, 2)), DataError);
  CHECK_THROWS_AS(inject(base, event_of(CorruptionKind::GreenFlash, -1, 2)), DataError);
  CHECK_THROWS_AS(inject(base, event_of(CorruptionKind::GreenFlash, 0, 0)), DataError);
}

TEST_CASE("every kind separates feature vectors from the clean segment") {
  SceneSpec spec;
  spec.motion = Motion::DriftingGradient;
  spec.palette_seed = 6;
  const Video base = render_base_video(spec, 16, 99);
  Segment clean;
  clean.frames = base.frames;
  const FeatureVector clean_features = extract_segment_features(clean);
  for (CorruptionKind kind : kAllCorruptionKinds) {
    auto [dmin, dmax] = event_duration_range(kind);
    (void)dmax;
    CorruptionEvent e = event_of(kind, 0, std::min(dmin, 16));
    if (kind == CorruptionKind::GreenFlash) e.duration = 2;
    const Video out = inject(base, e);
    Segment corrupted;
    corrupted.frames = out.frames;
    const FeatureVector corrupted_features = extract_segment_features(corrupted);
    CHECK_MESSAGE(l2_sq(clean_features, corrupted_features) > 0.0, to_string(kind));
  }
}

TEST_CASE("generate_dataset honors labels, counts and the corruption coin") {
  TempDir tmp("gen");
  GeneratorConfig config(6, 6);
  config.frames_per_video = 48;
  config.height = 32;
  config.width = 32;
  config.seed = 5;

  SUBCASE("p_corrupt = 1 gives every label-1 video at least one event") {
    config.p_corrupt = 1.0;
    const DatasetManifest manifest = generate_dataset(config, tmp.file("a"));
    CHECK(manifest.videos.size() == 12);
    for (const ManifestEntry& entry : manifest.videos) {
      if (entry.label == 1) {
        CHECK(entry.events.size() >= 1);
      } else {
        CHECK(entry.events.empty());
      }
    }
  }

  SUBCASE("p_corrupt = 0 gives pure label noise") {
    config.p_corrupt = 0.0;
    const DatasetManifest manifest = generate_dataset(config, tmp.file("b"));
    for (const ManifestEntry& entry : manifest.videos) CHECK(entry.events.empty());
  }
}

TEST_CASE("generate_dataset is byte-stable across runs") {
  TempDir tmp("det");
  GeneratorConfig config(3, 3);
  config.frames_per_video = 40;
  config.height = 32;
  config.width = 32;
  config.seed = 11;
  const DatasetManifest m1 = generate_dataset(config, tmp.file("r1"));
  const DatasetManifest m2 = generate_dataset(config, tmp.file("r2"));
  CHECK(read_file(tmp.file("r1/manifest.json")) == read_file(tmp.file("r2/manifest.json")));
  for (const ManifestEntry& entry : m1.videos) {
    CHECK(read_file(m1.resolve(entry)) == read_file(m2.resolve(entry)));
  }
  // events land inside the video extent
  for (const ManifestEntry& entry : m1.videos) {
    for (const CorruptionEvent& e : entry.events) {
      CHECK(e.duration >= 1);
      CHECK(e.start_frame >= 0);
      CHECK(e.start_frame + e.duration <= 40);
    }
  }
}

TEST_CASE("generate_dataset validates its config") {
  GeneratorConfig config(1, 1);
  config.p_corrupt = 1.5;
  TempDir tmp("genbad");
  CHECK_THROWS_AS(generate_dataset(config, tmp.str()), ConfigError);
}

TEST_CASE("split kind restrictions hold") {
  TempDir tmp("kinds");
  GeneratorConfig config;
  config.frames_per_video = 160;
  config.height = 32;
  config.width = 32;
  config.seed = 3;
  config.events_max = 2;
  SplitPlan plan;
  plan.name = "train";
  plan.corrupted = 12;
  plan.normal = 2;
  plan.kinds = {CorruptionKind::GreenFlash, CorruptionKind::SuddenBlackout};
  config.splits = {plan};
  const DatasetManifest manifest = generate_dataset(config, tmp.str());
  std::set<CorruptionKind> seen;
  for (const ManifestEntry& entry : manifest.videos) {
    for (const CorruptionEvent& e : entry.events) seen.insert(e.kind);
  }
  CHECK(seen.size() <= 2);
  for (CorruptionKind kind : seen) {
    CHECK((kind == CorruptionKind::GreenFlash || kind == CorruptionKind::SuddenBlackout));
  }
}
