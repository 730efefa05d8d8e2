#pragma once

// Whole-video object sequences: scoring against the raw detections, sequence
// IoU, greedy sequence NMS, and rendering to per-frame label maps.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcmpg/mask.hpp"
#include "mcmpg/propagation.hpp"
#include "mcmpg/track.hpp"

namespace mcmpg {

struct ScoredMask {
  Mask mask;
  double objectness = 0.0;
};

/// Detections per frame, binarized at 0.5.
using FrameDetections = std::vector<std::vector<ScoredMask>>;

inline FrameDetections binarize_detections(std::span<const std::vector<Proposal>> by_frame) {
  FrameDetections out(by_frame.size());
  for (std::size_t f = 0; f < by_frame.size(); ++f) {
    for (const auto& p : by_frame[f]) out[f].push_back({binarize(p.prob, 0.5), p.objectness});
  }
  return out;
}

/// Mean over frames of max_i IoU(track_t, detection_i) * objectness_i. A
/// frame without detections contributes 0.
inline double sequence_score(const Track& track, const FrameDetections& detections) {
  if (detections.size() != track.masks.size()) {
    throw std::invalid_argument("sequence_score: track covers " +
                                std::to_string(track.masks.size()) + " frames, detections " +
                                std::to_string(detections.size()));
  }
  if (track.masks.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < track.masks.size(); ++t) {
    double best = 0.0;
    for (const auto& d : detections[t]) best = std::max(best, iou(track.masks[t], d.mask) * d.objectness);
    total += best;
  }
  return total / static_cast<double>(track.masks.size());
}

/// Spatio-temporal IoU: sum of per-frame intersections over sum of unions.
inline double sequence_iou(const Track& a, const Track& b) {
  if (a.masks.size() != b.masks.size()) {
    throw std::invalid_argument("sequence_iou: tracks differ in length");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t t = 0; t < a.masks.size(); ++t) {
    const std::size_t i = intersection_area(a.masks[t], b.masks[t]);
    inter += i;
    uni += a.masks[t].area() + b.masks[t].area() - i;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Higher score first, then smaller track id.
inline bool ranks_before(const Track& a, const Track& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.track_id < b.track_id;
}

/// Greedy NMS: keep the best remaining track, drop everything whose sequence
/// IoU with it exceeds the threshold. Survivors come out in rank order.
inline SequenceSet sequence_nms(const SequenceSet& seqs, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("sequence_nms: threshold outside [0,1]");
  }
  std::vector<const Track*> order;
  for (const auto& t : seqs.tracks) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const Track* a, const Track* b) { return ranks_before(*a, *b); });
  std::vector<bool> suppressed(order.size(), false);
  SequenceSet out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (suppressed[i]) continue;
    out.tracks.push_back(*order[i]);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (!suppressed[j] && sequence_iou(*order[i], *order[j]) > threshold) suppressed[j] = true;
    }
  }
  return out;
}

struct LabelMaps {
  GridShape shape;
  std::vector<std::vector<std::uint8_t>> frames;
  std::vector<int> track_ids;  ///< track_ids[label - 1]
};

/// Single-label rendering. Tracks are ranked by score; label k goes to the
/// k-th ranked track and a pixel claimed by several tracks keeps the best
/// ranked one. At most 255 labels fit an 8-bit map.
inline LabelMaps render_labels(const SequenceSet& seqs, const GridShape& shape, int frame_count,
                               std::optional<int> top_m = std::nullopt) {
  LabelMaps out;
  out.shape = shape;
  out.frames.assign(static_cast<std::size_t>(frame_count),
                    std::vector<std::uint8_t>(shape.pixels(), 0));
  std::vector<const Track*> order;
  for (const auto& t : seqs.tracks) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const Track* a, const Track* b) { return ranks_before(*a, *b); });
  std::size_t cap = std::min<std::size_t>(order.size(), 255);
  if (top_m) cap = std::min(cap, static_cast<std::size_t>(std::max(0, *top_m)));
  // Paint worst-ranked first so better tracks overwrite.
  for (std::size_t k = cap; k-- > 0;) {
    const Track& t = *order[k];
    if (t.masks.size() != static_cast<std::size_t>(frame_count)) {
      throw std::invalid_argument("render_labels: track length differs from video length");
    }
    for (int f = 0; f < frame_count; ++f) {
      const auto dense = t.masks[static_cast<std::size_t>(f)].to_dense();
      auto& frame = out.frames[static_cast<std::size_t>(f)];
      for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i]) frame[i] = static_cast<std::uint8_t>(k + 1);
      }
    }
  }
  for (std::size_t k = 0; k < cap; ++k) out.track_ids.push_back(order[k]->track_id);
  return out;
}

}  // namespace mcmpg
