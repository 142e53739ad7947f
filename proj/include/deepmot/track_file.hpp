#pragma once

#include <cstdint>
#include <vector>

#include "deepmot/geometry.hpp"

namespace deepmot {

struct TrackedBox {
  std::int64_t id = -1;
  Box box;
};

// Per-frame identified boxes, frames 1-based. Negative ids are anonymous
// (detection files); non-negative ids must be unique within a frame.
struct TrackFile {
  FrameDims dims;
  std::vector<std::vector<TrackedBox>> frames;  // frames[0] is frame 1

  std::size_t frame_count() const { return frames.size(); }
  void ensure_frames(std::size_t n) {
    if (frames.size() < n) frames.resize(n);
  }
  std::vector<TrackedBox>& frame(std::size_t f) { return frames[f - 1]; }
  const std::vector<TrackedBox>& frame(std::size_t f) const { return frames[f - 1]; }

  std::size_t total_boxes() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.size();
    return n;
  }
};

}  // namespace deepmot
