#pragma once

#include <vector>

#include "mcmpg/keyframe.hpp"
#include "mcmpg/mask.hpp"

namespace mcmpg {

/// One candidate object: a mask on every frame of the video.
struct Track {
  int track_id = 0;
  FrameId key_frame = 0;
  std::vector<Mask> masks;
  double score = 0.0;

  int frame_count() const { return static_cast<int>(masks.size()); }
};

struct SequenceSet {
  std::vector<Track> tracks;

  std::size_t size() const { return tracks.size(); }
};

}  // namespace mcmpg
