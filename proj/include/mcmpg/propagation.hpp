#pragma once

// Propagators transport a probability mask from one frame of a video to
// another. They stand in for a semi-supervised VOS tracker: built-in
// deterministic ones cover testing and synthetic benchmarks, the plugin
// kind bridges to an external tracker process.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "mcmpg/error.hpp"
#include "mcmpg/keyframe.hpp"
#include "mcmpg/mask.hpp"
#include "mcmpg/rng.hpp"
#include "mcmpg/track.hpp"

namespace mcmpg {

/// Detection index within its source frame.
struct ProposalId {
  FrameId frame = 0;
  int index = 0;

  friend auto operator<=>(const ProposalId&, const ProposalId&) = default;
};

inline std::string to_string(const ProposalId& id) {
  return std::to_string(id.frame) + ":" + std::to_string(id.index);
}

/// A per-frame instance-segmentation detection.
struct Proposal {
  FrameId source_frame = 0;
  ProbMask prob;
  double objectness = 1.0;
  ProposalId id;
};

struct PropagatedProposal {
  FrameId origin_frame = 0;
  FrameId target_frame = 0;
  ProbMask prob;
  ProposalId origin;
};

/// Motion of the whole frame content from frame t to frame t+1, applied
/// about the grid center.
struct Motion {
  double dx = 0.0;
  double dy = 0.0;
  double scale = 1.0;
  double rotation_deg = 0.0;
};
using MotionTable = std::vector<Motion>;

struct PropagatorSpec {
  enum class Kind { identity, affine, noisy, plugin };

  Kind kind = Kind::identity;
  MotionTable motion;         ///< affine: entry t moves frame t to t+1
  std::uint64_t seed = 0;     ///< noisy
  double strength = 0.5;      ///< noisy: probability of punching a hole
  std::string command;        ///< plugin: shell command line
  int processes = 1;          ///< plugin: concurrent child processes
};

inline const char* to_string(PropagatorSpec::Kind k) {
  switch (k) {
    case PropagatorSpec::Kind::identity: return "identity";
    case PropagatorSpec::Kind::affine: return "affine";
    case PropagatorSpec::Kind::noisy: return "noisy";
    case PropagatorSpec::Kind::plugin: return "plugin";
  }
  return "?";
}

inline PropagatorSpec::Kind parse_propagator_kind(const std::string& s) {
  if (s == "identity") return PropagatorSpec::Kind::identity;
  if (s == "affine" || s == "affine-motion") return PropagatorSpec::Kind::affine;
  if (s == "noisy") return PropagatorSpec::Kind::noisy;
  if (s == "plugin") return PropagatorSpec::Kind::plugin;
  throw ConfigError("unknown propagator kind '" + s + "'");
}

/// What a propagator may know about the video it works on.
struct VideoContext {
  std::string video_id;
  GridShape grid;
  int frame_count = 1;
  std::vector<std::string> frame_paths;  ///< may be empty for in-memory videos
  std::filesystem::path scratch_dir;     ///< plugin request files go here
};

/// Implementations must be safe to call concurrently.
class Propagator {
 public:
  virtual ~Propagator() = default;
  virtual ProbMask propagate(const VideoContext& video, const ProbMask& source,
                             FrameId from, FrameId to) = 0;
};

class IdentityPropagator final : public Propagator {
 public:
  ProbMask propagate(const VideoContext&, const ProbMask& source, FrameId, FrameId) override {
    return source;
  }
};

namespace detail {

struct Affine2 {
  // x' = a*x + b*y + tx ; y' = c*x + d*y + ty
  double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

  Affine2 then(const Affine2& next) const {
    return {next.a * a + next.b * c,           next.a * b + next.b * d,
            next.c * a + next.d * c,           next.c * b + next.d * d,
            next.a * tx + next.b * ty + next.tx, next.c * tx + next.d * ty + next.ty};
  }
  Affine2 inverse() const {
    const double det = a * d - b * c;
    if (det == 0.0) throw PropagationError("affine propagator: singular motion (scale 0)");
    const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;
    return {ia, ib, ic, id, -(ia * tx + ib * ty), -(ic * tx + id * ty)};
  }
};

inline Affine2 step_transform(const Motion& m, const GridShape& grid) {
  const double cx = grid.width / 2.0, cy = grid.height / 2.0;
  if (m.scale == 1.0 && m.rotation_deg == 0.0) return {1, 0, 0, 1, m.dx, m.dy};
  const double th = m.rotation_deg * std::numbers::pi / 180.0;
  const double ca = m.scale * std::cos(th), sa = m.scale * std::sin(th);
  // c + s R (p - c) + t
  return {ca, -sa, sa, ca, cx - ca * cx + sa * cy + m.dx, cy - sa * cx - ca * cy + m.dy};
}

}  // namespace detail

/// Warps masks with the composition of per-frame motions. Nearest-neighbour
/// sampling at pixel centers; content leaving the grid is dropped.
class AffinePropagator final : public Propagator {
 public:
  explicit AffinePropagator(MotionTable table) : table_(std::move(table)) {}

  ProbMask propagate(const VideoContext&, const ProbMask& source, FrameId from,
                     FrameId to) override {
    if (from == to) return source;
    const GridShape& grid = source.shape();
    detail::Affine2 fwd;
    const FrameId lo = std::min(from, to), hi = std::max(from, to);
    for (FrameId f = lo; f < hi; ++f) fwd = fwd.then(detail::step_transform(motion_at(f), grid));
    // Mapping from target pixel back to source pixel.
    const detail::Affine2 back = from < to ? fwd.inverse() : fwd;

    std::vector<std::uint8_t> out(grid.pixels(), 0);
    const auto src = source.levels();
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        const double qx = x + 0.5, qy = y + 0.5;
        const double px = back.a * qx + back.b * qy + back.tx;
        const double py = back.c * qx + back.d * qy + back.ty;
        const double sx = std::floor(px), sy = std::floor(py);
        if (sx < 0 || sy < 0 || sx >= grid.width || sy >= grid.height) continue;
        out[static_cast<std::size_t>(y) * grid.width + static_cast<std::size_t>(x)] =
            src[static_cast<std::size_t>(sy) * grid.width + static_cast<std::size_t>(sx)];
      }
    }
    return ProbMask(grid, std::move(out));
  }

 private:
  Motion motion_at(FrameId f) const {
    return f >= 0 && static_cast<std::size_t>(f) < table_.size() ? table_[static_cast<std::size_t>(f)]
                                                                   : Motion{};
  }
  MotionTable table_;
};

namespace detail {

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Square min (erode) or max (dilate) filter of the given radius.
inline std::vector<std::uint8_t> morph(const GridShape& g, std::span<const std::uint8_t> src,
                                       int radius, bool dilate) {
  std::vector<std::uint8_t> out(src.begin(), src.end());
  if (radius <= 0) return out;
  const int h = g.height, w = g.width;
  std::vector<std::uint8_t> tmp(src.size());
  // Separable: rows then columns. Off-grid counts as 0.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int v = dilate ? 0 : 255;
      for (int k = -radius; k <= radius; ++k) {
        const int xx = x + k;
        const int s = (xx < 0 || xx >= w) ? 0 : src[static_cast<std::size_t>(y) * w + xx];
        v = dilate ? std::max(v, s) : std::min(v, s);
      }
      tmp[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(v);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int v = dilate ? 0 : 255;
      for (int k = -radius; k <= radius; ++k) {
        const int yy = y + k;
        const int s = (yy < 0 || yy >= h) ? 0 : tmp[static_cast<std::size_t>(yy) * w + x];
        v = dilate ? std::max(v, s) : std::min(v, s);
      }
      out[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(v);
    }
  }
  return out;
}

struct Box {
  int y0 = 0, x0 = 0, y1 = -1, x1 = -1;  // inclusive
  bool empty() const { return y1 < y0 || x1 < x0; }
  int height() const { return y1 - y0 + 1; }
  int width() const { return x1 - x0 + 1; }
};

inline Box bounding_box(const GridShape& g, std::span<const std::uint8_t> px) {
  Box b{g.height, g.width, -1, -1};
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (!px[static_cast<std::size_t>(y) * g.width + x]) continue;
      b.y0 = std::min(b.y0, y);
      b.x0 = std::min(b.x0, x);
      b.y1 = std::max(b.y1, y);
      b.x1 = std::max(b.x1, x);
    }
  }
  return b;
}

/// Zeroes a random rectangle inside `box` with sides in [1/4, 1/2] of the box.
inline void punch_hole(const GridShape& g, std::vector<std::uint8_t>& px, const Box& box,
                       Rng& rng) {
  if (box.empty()) return;
  const int hh = std::max(1, static_cast<int>(std::lround(box.height() * rng.uniform(0.25, 0.5))));
  const int hw = std::max(1, static_cast<int>(std::lround(box.width() * rng.uniform(0.25, 0.5))));
  const int y0 = static_cast<int>(rng.uniform_int(box.y0, std::max(box.y0, box.y1 - hh + 1)));
  const int x0 = static_cast<int>(rng.uniform_int(box.x0, std::max(box.x0, box.x1 - hw + 1)));
  for (int y = y0; y < std::min(g.height, y0 + hh); ++y) {
    for (int x = x0; x < std::min(g.width, x0 + hw); ++x) px[static_cast<std::size_t>(y) * g.width + x] = 0;
  }
}

}  // namespace detail

/// Seeded corruption (erode or dilate by radius 0..2, optional rectangular
/// hole) followed by identity transport. The corruption stream is keyed by
/// seed, both frame ids and the mask content, so results do not depend on
/// call order.
class NoisyPropagator final : public Propagator {
 public:
  NoisyPropagator(std::uint64_t seed, double strength) : seed_(seed), strength_(strength) {}

  ProbMask propagate(const VideoContext&, const ProbMask& source, FrameId from,
                     FrameId to) override {
    Rng rng(derive_seed({seed_, static_cast<std::uint64_t>(from), static_cast<std::uint64_t>(to),
                         detail::fnv1a(source.levels())}));
    const GridShape& g = source.shape();
    const int radius = static_cast<int>(rng.uniform_int(0, 2));
    const bool dilate = rng.bernoulli(0.5);
    auto px = detail::morph(g, source.levels(), radius, dilate);
    if (rng.bernoulli(strength_)) detail::punch_hole(g, px, detail::bounding_box(g, px), rng);
    return ProbMask(g, std::move(px));
  }

 private:
  std::uint64_t seed_;
  double strength_;
};

inline std::unique_ptr<Propagator> make_plugin_propagator(const PropagatorSpec& spec);

inline std::unique_ptr<Propagator> make_propagator(const PropagatorSpec& spec) {
  switch (spec.kind) {
    case PropagatorSpec::Kind::identity: return std::make_unique<IdentityPropagator>();
    case PropagatorSpec::Kind::affine: return std::make_unique<AffinePropagator>(spec.motion);
    case PropagatorSpec::Kind::noisy:
      return std::make_unique<NoisyPropagator>(spec.seed, spec.strength);
    case PropagatorSpec::Kind::plugin: return make_plugin_propagator(spec);
  }
  throw ConfigError("unknown propagator kind");
}

inline PropagatedProposal propagate(Propagator& propagator, const VideoContext& video,
                                    const Proposal& proposal, FrameId target) {
  if (proposal.source_frame < 0 || proposal.source_frame >= video.frame_count || target < 0 ||
      target >= video.frame_count) {
    throw PropagationError("propagate: frame " + std::to_string(proposal.source_frame) + " -> " +
                           std::to_string(target) + " outside video of " +
                           std::to_string(video.frame_count) + " frames");
  }
  ProbMask out = propagator.propagate(video, proposal.prob, proposal.source_frame, target);
  if (!(out.shape() == proposal.prob.shape())) {
    throw PropagationError("propagator returned a " + to_string(out.shape()) + " mask for a " +
                           to_string(proposal.prob.shape()) + " grid");
  }
  return {proposal.source_frame, target, std::move(out), proposal.id};
}

/// Outcome of tracking one key frame proposal; `error` is set on failure.
struct TrackAttempt {
  std::optional<Track> track;
  std::string error;
};

/// Tracks one binary key frame mask to every frame of the video. Each frame is
/// reached by a single propagate call from the key frame; the result is
/// binarized at 0.5. The key frame entry is the input itself.
inline Track track_one(Propagator& propagator, const VideoContext& video, FrameId key_frame,
                       const Mask& mask, int track_id) {
  Track t;
  t.track_id = track_id;
  t.key_frame = key_frame;
  t.masks.reserve(static_cast<std::size_t>(video.frame_count));
  const ProbMask source = ProbMask::from_mask(mask);
  for (FrameId f = 0; f < video.frame_count; ++f) {
    if (f == key_frame) {
      t.masks.push_back(mask);
      continue;
    }
    ProbMask out = propagator.propagate(video, source, key_frame, f);
    require_same_shape(mask.shape(), out.shape(), "track");
    t.masks.push_back(binarize(out, 0.5));
  }
  return t;
}

inline std::vector<TrackAttempt> track_bidirectional(Propagator& propagator,
                                                     const VideoContext& video, FrameId key_frame,
                                                     const std::vector<Mask>& proposals,
                                                     int first_track_id = 0) {
  std::vector<TrackAttempt> out;
  out.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    TrackAttempt attempt;
    try {
      attempt.track = track_one(propagator, video, key_frame, proposals[i],
                                first_track_id + static_cast<int>(i));
    } catch (const std::exception& e) {
      attempt.error = e.what();
    }
    out.push_back(std::move(attempt));
  }
  return out;
}

}  // namespace mcmpg

#include "mcmpg/plugin.hpp"
