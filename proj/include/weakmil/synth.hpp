#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "weakmil/core.hpp"

namespace weakmil {

enum class Motion : int { DriftingGradient = 0, BouncingRects, ScrollingBars };

const char* to_string(Motion motion);
Motion motion_from_string(const std::string& name);

// Procedural base scene. Content is benign but non-static: every pair of
// consecutive frames differs somewhere.
struct SceneSpec {
  int height = 112;
  int width = 112;
  Motion motion = Motion::DriftingGradient;
  uint64_t palette_seed = 0;
};

// Deterministic for (spec, n_frames, seed); per-frame content depends only
// on the frame index, so rendering is parallelizable per frame.
Video render_base_video(const SceneSpec& spec, int n_frames, uint64_t seed);

// Applies one corruption event. Frames outside [start, start+duration) are
// byte-identical to the input. Pixel-level definitions per kind:
//   GreenFlash       whole frame := (0,255,0)
//   SuddenBlackout   whole frame := 0
//   HalfScreen       left ⌈w/2⌉ columns := 0
//   BottomSplit      bottom ⌈f·h⌉ rows := copy of the rows immediately above
//   Lines            every k-th row (or column) := (255,255,255)
//   Flicker          samples scaled by gain g on every other frame, clamped
//   DisplayStride    row r circularly shifted right by (r·δ) mod w pixels
//   ColorSpaceChange channel permutation R→G, G→B, B→R
//   MessagePopup     rectangle filled with 200 inside a 1-pixel black border
//   MacroBlock       n random 16×16 blocks, solid random colors from sub_seed
Video inject(const Video& video, const CorruptionEvent& event);

// Uniform duration ranges per kind, in frames.
std::pair<int, int> event_duration_range(CorruptionKind kind);

// Draws kind, placement, duration and kind-specific params from the event
// seed. The event's sub_seed (block fills) is drawn from the same stream.
CorruptionEvent random_event(const std::vector<CorruptionKind>& kinds, int n_frames,
                             int height, int width, uint64_t event_seed);

// One portion of a generated dataset.
struct SplitPlan {
  std::string name = "train";
  int corrupted = 0;
  int normal = 0;
  // Kinds eligible for this split's events; empty means all ten.
  std::vector<CorruptionKind> kinds;
};

struct GeneratorConfig {
  int frames_per_video = 512;
  int height = 112;
  int width = 112;
  double p_corrupt = 1.0;  // probability that a label-1 video gets events
  int events_min = 1;
  int events_max = 2;
  uint64_t seed = 0;
  std::vector<SplitPlan> splits;

  GeneratorConfig() = default;
  GeneratorConfig(int n_corrupted, int n_normal) {
    splits.push_back({"train", n_corrupted, n_normal, {}});
  }

  void validate() const;
};

// Renders every video, injects events into label-1 videos with probability
// p_corrupt, writes WMVD files under <out_dir>/videos/ and the manifest to
// <out_dir>/manifest.json. Fully deterministic for a fixed config.
DatasetManifest generate_dataset(const GeneratorConfig& config, const std::string& out_dir);

}  // namespace weakmil
