#pragma once

// DAVIS-style evaluation: region similarity J, boundary F-measure, recall,
// decay, track-to-object assignment, and key frame proposal mIoU.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcmpg/error.hpp"
#include "mcmpg/mask.hpp"
#include "mcmpg/mp_graph.hpp"
#include "mcmpg/track.hpp"

namespace mcmpg {

/// Per-frame label maps; 0 is background, objects are 1..object_count.
struct GroundTruth {
  GridShape shape;
  std::vector<std::vector<std::uint8_t>> labels;
  int object_count = 0;

  int frame_count() const { return static_cast<int>(labels.size()); }

  Mask object_mask(int object, FrameId frame) const {
    const auto& l = labels[static_cast<std::size_t>(frame)];
    std::vector<std::uint8_t> px(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) px[i] = l[i] == object;
    return Mask::from_dense(shape, px);
  }

  std::vector<Mask> object_masks(int object) const {
    std::vector<Mask> out;
    out.reserve(labels.size());
    for (int f = 0; f < frame_count(); ++f) out.push_back(object_mask(object, f));
    return out;
  }

  /// Validates shapes and that labels 1..m all occur; sets object_count.
  static GroundTruth from_labels(GridShape shape, std::vector<std::vector<std::uint8_t>> labels) {
    GroundTruth gt{shape, std::move(labels), 0};
    std::vector<bool> seen(256, false);
    for (const auto& f : gt.labels) {
      if (f.size() != shape.pixels()) throw ShapeMismatch("ground truth frame does not match grid");
      for (auto v : f) seen[v] = true;
    }
    int m = 0;
    for (int v = 255; v >= 1; --v) {
      if (seen[static_cast<std::size_t>(v)]) {
        m = v;
        break;
      }
    }
    for (int v = 1; v <= m; ++v) {
      if (!seen[static_cast<std::size_t>(v)]) {
        throw InputError("ground truth labels are not contiguous: label " + std::to_string(v) +
                         " missing below " + std::to_string(m));
      }
    }
    gt.object_count = m;
    return gt;
  }
};

/// Frames that enter the means: first and last are excluded when T > 2.
inline std::vector<std::size_t> evaluated_frames(std::size_t frame_count) {
  std::vector<std::size_t> out;
  const std::size_t lo = frame_count > 2 ? 1 : 0;
  const std::size_t hi = frame_count > 2 ? frame_count - 1 : frame_count;
  for (std::size_t f = lo; f < hi; ++f) out.push_back(f);
  return out;
}

inline double mean_over(std::span<const double> values, const std::vector<std::size_t>& frames) {
  if (frames.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t f : frames) s += values[f];
  return s / static_cast<double>(frames.size());
}

struct FrameSeries {
  std::vector<double> per_frame;  ///< every frame
  double mean = 0.0;              ///< over evaluated_frames()
};

/// Per-frame J. Both masks empty counts as a perfect 1 (object correctly absent).
inline double frame_region_similarity(const Mask& pred, const Mask& gt) {
  if (pred.empty() && gt.empty()) return 1.0;
  return iou(pred, gt);
}

inline FrameSeries region_similarity(std::span<const Mask> pred, std::span<const Mask> gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("region_similarity: length mismatch");
  FrameSeries s;
  for (std::size_t t = 0; t < pred.size(); ++t) s.per_frame.push_back(frame_region_similarity(pred[t], gt[t]));
  s.mean = mean_over(s.per_frame, evaluated_frames(pred.size()));
  return s;
}

/// ceil(0.008 * image diagonal), at least 1.
inline int default_boundary_tolerance(const GridShape& g) {
  const double diag = std::hypot(static_cast<double>(g.height), static_cast<double>(g.width));
  return std::max(1, static_cast<int>(std::ceil(0.008 * diag)));
}

namespace detail {

/// Dilation by a Euclidean disk of radius `tol`.
inline std::vector<std::uint8_t> dilate_disk(const GridShape& g, const std::vector<std::uint8_t>& px,
                                             int tol) {
  if (tol <= 0) return px;
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -tol; dy <= tol; ++dy) {
    for (int dx = -tol; dx <= tol; ++dx) {
      if (dy * dy + dx * dx <= tol * tol) offsets.emplace_back(dy, dx);
    }
  }
  std::vector<std::uint8_t> out(px.size(), 0);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (!px[static_cast<std::size_t>(y) * g.width + x]) continue;
      for (auto [dy, dx] : offsets) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < g.height && xx >= 0 && xx < g.width) {
          out[static_cast<std::size_t>(yy) * g.width + xx] = 1;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// Boundary F-measure for one frame. Boundary pixels of each mask count as
/// matched when they fall within `tol` of the other mask's boundary.
inline double frame_boundary_accuracy(const Mask& pred, const Mask& gt, int tol) {
  if (tol < 0) throw std::invalid_argument("boundary_accuracy: tolerance must be >= 0");
  require_same_shape(pred.shape(), gt.shape(), "boundary_accuracy");
  const auto pb = boundary(pred).to_dense();
  const auto gb = boundary(gt).to_dense();
  const auto pb_dil = detail::dilate_disk(pred.shape(), pb, tol);
  const auto gb_dil = detail::dilate_disk(gt.shape(), gb, tol);
  std::size_t n_pred = 0, n_gt = 0, pred_hit = 0, gt_hit = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    n_pred += pb[i];
    n_gt += gb[i];
    pred_hit += pb[i] && gb_dil[i];
    gt_hit += gb[i] && pb_dil[i];
  }
  double precision, recall;
  if (n_pred == 0 && n_gt == 0) {
    precision = recall = 1.0;
  } else if (n_pred == 0) {
    precision = 1.0;
    recall = 0.0;
  } else if (n_gt == 0) {
    precision = 0.0;
    recall = 1.0;
  } else {
    precision = static_cast<double>(pred_hit) / static_cast<double>(n_pred);
    recall = static_cast<double>(gt_hit) / static_cast<double>(n_gt);
  }
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

inline FrameSeries boundary_accuracy(std::span<const Mask> pred, std::span<const Mask> gt, int tol) {
  if (pred.size() != gt.size()) throw std::invalid_argument("boundary_accuracy: length mismatch");
  FrameSeries s;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    s.per_frame.push_back(frame_boundary_accuracy(pred[t], gt[t], tol));
  }
  s.mean = mean_over(s.per_frame, evaluated_frames(pred.size()));
  return s;
}

struct RecallDecay {
  double recall = 0.0;
  double decay = 0.0;
};

/// Recall: fraction of values above 0.5. Decay: mean of the first of four
/// equal time bins minus mean of the last. Bins are [floor(i n/4),
/// floor((i+1) n/4)), widened to one element when n < 4.
inline RecallDecay recall_and_decay(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("recall_and_decay: empty series");
  const std::size_t n = values.size();
  RecallDecay out;
  out.recall = static_cast<double>(std::count_if(values.begin(), values.end(),
                                                 [](double v) { return v > 0.5; })) /
               static_cast<double>(n);
  auto bin_mean = [&](std::size_t i) {
    const std::size_t lo = std::min(i * n / 4, n - 1);
    const std::size_t hi = std::max((i + 1) * n / 4, lo + 1);
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += values[k];
    return s / static_cast<double>(hi - lo);
  };
  out.decay = bin_mean(0) - bin_mean(3);
  return out;
}

/// Maximum-weight assignment on a rectangular score matrix (rows x cols).
/// Returns, per row, the assigned column or -1.
inline std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& score) {
  const std::size_t rows = score.size();
  const std::size_t cols = rows ? score[0].size() : 0;
  const std::size_t n = std::max(rows, cols);
  if (n == 0) return {};
  // Hungarian algorithm (potentials), minimising -score on a square padding.
  auto cost = [&](std::size_t i, std::size_t j) {
    return (i < rows && j < cols) ? -score[i][j] : 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> out(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j] - 1;
    if (i < rows && j - 1 < cols) out[i] = static_cast<int>(j - 1);
  }
  return out;
}

struct PairScore {
  FrameSeries j;
  FrameSeries f;
  double jf() const { return 0.5 * (j.mean + f.mean); }
};

struct Matching {
  std::vector<int> gt_to_track;  ///< index into the track list, -1 if unmatched
  std::vector<std::vector<PairScore>> pairs;  ///< [gt object][track]
};

/// One-to-one assignment of tracks to ground-truth objects maximising the
/// summed J&F.
inline Matching match_tracks(const SequenceSet& pred, const GroundTruth& gt, int tol) {
  Matching m;
  std::vector<std::vector<double>> score(static_cast<std::size_t>(gt.object_count));
  m.pairs.resize(static_cast<std::size_t>(gt.object_count));
  for (int o = 0; o < gt.object_count; ++o) {
    const auto gt_masks = gt.object_masks(o + 1);
    for (const auto& track : pred.tracks) {
      PairScore ps{region_similarity(track.masks, gt_masks),
                   boundary_accuracy(track.masks, gt_masks, tol)};
      score[static_cast<std::size_t>(o)].push_back(ps.jf());
      m.pairs[static_cast<std::size_t>(o)].push_back(std::move(ps));
    }
  }
  m.gt_to_track = pred.tracks.empty() ? std::vector<int>(static_cast<std::size_t>(gt.object_count), -1)
                                      : max_weight_assignment(score);
  return m;
}

struct ObjectMetrics {
  int object = 0;     ///< ground-truth label
  int track_id = -1;  ///< matched track, -1 when none
  double j = 0.0, f = 0.0;
  double j_recall = 0.0, j_decay = 0.0;
  double f_recall = 0.0, f_decay = 0.0;
  std::vector<double> j_per_frame;

  double jf() const { return 0.5 * (j + f); }
};

struct ProposalQuality {
  double sum = 0.0;
  int count = 0;  ///< (object, key frame) pairs with a visible object
  double miou() const { return count ? sum / count : 0.0; }
};

/// For every ground-truth object visible on a key frame, the best IoU among
/// that key frame's proposals; missing proposals score 0.
inline ProposalQuality proposal_quality(std::span<const KeyFrameProposal> proposals,
                                        const GroundTruth& gt, std::span<const FrameId> keyframes) {
  ProposalQuality q;
  for (FrameId g : keyframes) {
    for (int o = 1; o <= gt.object_count; ++o) {
      const Mask obj = gt.object_mask(o, g);
      if (obj.empty()) continue;
      double best = 0.0;
      for (const auto& p : proposals) {
        if (p.key_frame == g) best = std::max(best, iou(p.mask, obj));
      }
      q.sum += best;
      ++q.count;
    }
  }
  return q;
}

inline double proposal_miou(std::span<const KeyFrameProposal> proposals, const GroundTruth& gt,
                            std::span<const FrameId> keyframes) {
  return proposal_quality(proposals, gt, keyframes).miou();
}

struct VideoReport {
  std::string video_id;
  std::vector<ObjectMetrics> objects;
  std::optional<ProposalQuality> proposals;

  double mean_j() const { return mean_of([](const ObjectMetrics& o) { return o.j; }); }
  double mean_f() const { return mean_of([](const ObjectMetrics& o) { return o.f; }); }
  double mean_jf() const { return 0.5 * (mean_j() + mean_f()); }

  template <typename F>
  double mean_of(F field) const {
    if (objects.empty()) return 0.0;
    double s = 0.0;
    for (const auto& o : objects) s += field(o);
    return s / static_cast<double>(objects.size());
  }
};

inline VideoReport evaluate_video(const std::string& video_id, const SequenceSet& pred,
                                  const GroundTruth& gt, int tol) {
  if (gt.object_count > 0 && !pred.tracks.empty() &&
      pred.tracks.front().masks.size() != gt.labels.size()) {
    throw std::invalid_argument("evaluate_video: track length differs from ground truth");
  }
  VideoReport r;
  r.video_id = video_id;
  const Matching m = match_tracks(pred, gt, tol);
  const auto frames = evaluated_frames(gt.labels.size());
  for (int o = 0; o < gt.object_count; ++o) {
    ObjectMetrics om;
    om.object = o + 1;
    const int k = m.gt_to_track[static_cast<std::size_t>(o)];
    std::vector<double> jv(gt.labels.size(), 0.0), fv(gt.labels.size(), 0.0);
    if (k >= 0) {
      const PairScore& ps = m.pairs[static_cast<std::size_t>(o)][static_cast<std::size_t>(k)];
      om.track_id = pred.tracks[static_cast<std::size_t>(k)].track_id;
      om.j = ps.j.mean;
      om.f = ps.f.mean;
      jv = ps.j.per_frame;
      fv = ps.f.per_frame;
    }
    std::vector<double> j_eval, f_eval;
    for (std::size_t f : frames) {
      j_eval.push_back(jv[f]);
      f_eval.push_back(fv[f]);
    }
    if (!j_eval.empty()) {
      const auto jr = recall_and_decay(j_eval);
      const auto fr = recall_and_decay(f_eval);
      om.j_recall = jr.recall;
      om.j_decay = jr.decay;
      om.f_recall = fr.recall;
      om.f_decay = fr.decay;
    }
    om.j_per_frame = std::move(jv);
    r.objects.push_back(std::move(om));
  }
  return r;
}

/// Corpus-level aggregate; means run over all objects of all videos.
struct MetricReport {
  std::vector<VideoReport> videos;
  int failures = 0;
  std::vector<std::string> failed_videos;

  template <typename F>
  double object_mean(F field) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& v : videos) {
      for (const auto& o : v.objects) {
        s += field(o);
        ++n;
      }
    }
    return n ? s / static_cast<double>(n) : 0.0;
  }
  double mean_j() const { return object_mean([](const ObjectMetrics& o) { return o.j; }); }
  double mean_f() const { return object_mean([](const ObjectMetrics& o) { return o.f; }); }
  double mean_jf() const { return 0.5 * (mean_j() + mean_f()); }

  std::optional<double> proposal_miou() const {
    ProposalQuality total;
    bool any = false;
    for (const auto& v : videos) {
      if (!v.proposals) continue;
      any = true;
      total.sum += v.proposals->sum;
      total.count += v.proposals->count;
    }
    if (!any) return std::nullopt;
    return total.miou();
  }
};

}  // namespace mcmpg
