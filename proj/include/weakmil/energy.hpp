#pragma once

#include <vector>

#include "weakmil/frame.hpp"

namespace weakmil {

// Patch-energy baseline: anomaly = unusually flat content. Scores are LOW
// for anomalous frames, so detection pipelines negate them before reusing
// the threshold/metric machinery.
struct EnergyConfig {
  int patch = 32;        // patch edge, pixels
  int k = 3;             // lowest-energy patches averaged into the score
  int window = 3;        // preceding frames used for normalization
  bool normalize = false;
};

using EnergyGrid = std::vector<double>;  // row-major patch grid

// Tiles the frame into non-overlapping patch x patch x 3 patches; per patch
// the residual r = value - per-channel patch mean and E = sqrt(sum r^2).
// Frame dims must be divisible by the patch size.
EnergyGrid patch_energies(const Frame& frame, int patch = 32);

// Mean of the k lowest patch energies. With normalization on, each energy
// is first divided by the mean energy at the same patch position over the
// history grids (ratios with divisor < 1e-9 count as 1). History must hold
// at least `window` grids when normalizing.
double frame_score(const EnergyGrid& grid, const EnergyConfig& config,
                   const std::vector<EnergyGrid>& history);

// Center-crops frames to the largest patch multiple (96x96 for 112x112),
// then scores each frame against its running history. With normalization on
// the first `window` frames are unscored. Returns (first scored frame
// index, scores).
struct VideoEnergyScores {
  int first_frame = 0;
  std::vector<double> scores;
};
VideoEnergyScores video_energy_scores(const Video& video, const EnergyConfig& config);

// Bag-level anomaly score over frames [begin, end): the negated minimum
// frame score, so higher means more anomalous.
double energy_bag_score(const VideoEnergyScores& scores, int begin, int end);

}  // namespace weakmil
