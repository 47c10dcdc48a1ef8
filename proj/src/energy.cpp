#include "weakmil/energy.hpp"

#include <algorithm>
#include <cmath>

#include "weakmil/common.hpp"

namespace weakmil {

EnergyGrid patch_energies(const Frame& frame, int patch) {
  if (patch < 1) throw ConfigError("configuration error: patch size must be >= 1");
  if (frame.height % patch != 0 || frame.width % patch != 0) {
    throw DataError("shape error: frame " + std::to_string(frame.height) + "x" +
                    std::to_string(frame.width) + " is not divisible by patch size " +
                    std::to_string(patch));
  }
  const int gh = frame.height / patch;
  const int gw = frame.width / patch;
  const double inv_count = 1.0 / (static_cast<double>(patch) * patch);
  EnergyGrid grid(static_cast<size_t>(gh) * gw);
  for (int pr = 0; pr < gh; ++pr) {
    for (int pc = 0; pc < gw; ++pc) {
      double mean[3] = {0.0, 0.0, 0.0};
      for (int r = pr * patch; r < (pr + 1) * patch; ++r) {
        const uint8_t* p = frame.data.data() + (static_cast<size_t>(r) * frame.width + pc * patch) * 3;
        for (int c = 0; c < patch; ++c) {
          mean[0] += p[3 * c];
          mean[1] += p[3 * c + 1];
          mean[2] += p[3 * c + 2];
        }
      }
      for (double& m : mean) m *= inv_count;
      double acc = 0.0;
      for (int r = pr * patch; r < (pr + 1) * patch; ++r) {
        const uint8_t* p = frame.data.data() + (static_cast<size_t>(r) * frame.width + pc * patch) * 3;
        for (int c = 0; c < patch; ++c) {
          for (int ch = 0; ch < 3; ++ch) {
            const double r0 = p[3 * c + ch] - mean[ch];
            acc += r0 * r0;
          }
        }
      }
      grid[static_cast<size_t>(pr) * gw + pc] = std::sqrt(acc);
    }
  }
  return grid;
}

double frame_score(const EnergyGrid& grid, const EnergyConfig& config,
                   const std::vector<EnergyGrid>& history) {
  if (grid.empty()) throw DataError("empty-input error: empty energy grid");
  if (config.k < 1) throw ConfigError("configuration error: k must be >= 1");
  if (config.window < 1) throw ConfigError("configuration error: window must be >= 1");

  EnergyGrid values = grid;
  if (config.normalize) {
    if (history.size() < static_cast<size_t>(config.window)) {
      throw DataError("empty-input error: insufficient history for normalization (need " +
                      std::to_string(config.window) + " frames, have " +
                      std::to_string(history.size()) + ")");
    }
    const size_t first = history.size() - static_cast<size_t>(config.window);
    for (size_t p = 0; p < values.size(); ++p) {
      double denom = 0.0;
      for (size_t h = first; h < history.size(); ++h) {
        if (history[h].size() != values.size()) {
          throw DataError("shape error: history grid size mismatch");
        }
        denom += history[h][p];
      }
      denom /= static_cast<double>(config.window);
      values[p] = denom < 1e-9 ? 1.0 : grid[p] / denom;
    }
  }

  const size_t k = std::min<size_t>(static_cast<size_t>(config.k), values.size());
  std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  double acc = 0.0;
  for (size_t i = 0; i < k; ++i) acc += values[i];
  return acc / static_cast<double>(k);
}

namespace {

Frame center_crop(const Frame& frame, int crop_h, int crop_w) {
  const int off_r = (frame.height - crop_h) / 2;
  const int off_c = (frame.width - crop_w) / 2;
  Frame out(crop_h, crop_w);
  for (int r = 0; r < crop_h; ++r) {
    const uint8_t* src = frame.data.data() + ((static_cast<size_t>(r) + off_r) * frame.width + off_c) * 3;
    uint8_t* dst = out.data.data() + static_cast<size_t>(r) * crop_w * 3;
    std::copy(src, src + static_cast<size_t>(crop_w) * 3, dst);
  }
  return out;
}

}  // namespace

VideoEnergyScores video_energy_scores(const Video& video, const EnergyConfig& config) {
  if (video.frames.empty()) throw DataError("empty-input error: video has no frames");
  const int crop_h = (video.height() / config.patch) * config.patch;
  const int crop_w = (video.width() / config.patch) * config.patch;
  if (crop_h == 0 || crop_w == 0) {
    throw DataError("shape error: frames smaller than one " + std::to_string(config.patch) +
                    "px patch");
  }

  VideoEnergyScores out;
  out.first_frame = config.normalize ? config.window : 0;
  std::vector<EnergyGrid> history;  // raw energies of preceding frames
  for (size_t t = 0; t < video.frames.size(); ++t) {
    const Frame cropped = (crop_h == video.height() && crop_w == video.width())
                              ? video.frames[t]
                              : center_crop(video.frames[t], crop_h, crop_w);
    EnergyGrid grid = patch_energies(cropped, config.patch);
    if (static_cast<int>(t) >= out.first_frame) {
      out.scores.push_back(frame_score(grid, config, history));
    }
    history.push_back(std::move(grid));
    if (history.size() > static_cast<size_t>(config.window)) {
      history.erase(history.begin());
    }
  }
  return out;
}

double energy_bag_score(const VideoEnergyScores& scores, int begin, int end) {
  const int lo = std::max(begin, scores.first_frame);
  const int hi = std::min<int>(end, scores.first_frame + static_cast<int>(scores.scores.size()));
  if (lo >= hi) {
    throw DataError("empty-input error: bag frame range has no scored frames");
  }
  double lowest = scores.scores[static_cast<size_t>(lo - scores.first_frame)];
  for (int t = lo + 1; t < hi; ++t) {
    lowest = std::min(lowest, scores.scores[static_cast<size_t>(t - scores.first_frame)]);
  }
  return -lowest;
}

}  // namespace weakmil
