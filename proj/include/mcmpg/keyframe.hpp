#pragma once

// Key frame selection at fixed intervals and the local clip around each key frame.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcmpg {

using FrameId = int;

struct KeyFrameClip {
  FrameId key_frame = 0;
  int window = 1;                ///< nominal clip size H (odd)
  std::vector<FrameId> members;  ///< ascending, clamped to the video
};

/// Key frames k * max(floor(T/K), 1) for k = 0..K-1; frames past the end of
/// the video are dropped.
inline std::vector<FrameId> select_keyframes(int frame_count, int keyframes) {
  if (frame_count < 1) throw std::invalid_argument("select_keyframes: frame count must be >= 1");
  if (keyframes < 1) throw std::invalid_argument("select_keyframes: K must be >= 1");
  const int interval = std::max(frame_count / keyframes, 1);
  std::vector<FrameId> out;
  for (int k = 0; k < keyframes; ++k) {
    const long long g = static_cast<long long>(k) * interval;
    if (g >= frame_count) break;
    if (out.empty() || out.back() != g) out.push_back(static_cast<FrameId>(g));
  }
  return out;
}

inline KeyFrameClip build_clip(FrameId key_frame, int window, int frame_count) {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("build_clip: clip size must be odd and >= 1, got " +
                                std::to_string(window));
  }
  if (key_frame < 0 || key_frame >= frame_count) {
    throw std::invalid_argument("build_clip: key frame " + std::to_string(key_frame) +
                                " outside video of " + std::to_string(frame_count) + " frames");
  }
  KeyFrameClip clip{key_frame, window, {}};
  const int half = (window - 1) / 2;
  const int lo = std::max(0, key_frame - half);
  const int hi = std::min(frame_count - 1, key_frame + half);
  for (int f = lo; f <= hi; ++f) clip.members.push_back(f);
  return clip;
}

}  // namespace mcmpg
