#pragma once

// Synthetic benchmark: moving shapes with exact ground truth, and a detection
// noise model that turns ground truth into imperfect per-frame proposals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcmpg/evaluation.hpp"
#include "mcmpg/mask.hpp"
#include "mcmpg/propagation.hpp"
#include "mcmpg/rng.hpp"

namespace mcmpg {

enum class ShapeKind { rectangle, ellipse, l_polyomino };

inline ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "rectangle") return ShapeKind::rectangle;
  if (s == "ellipse") return ShapeKind::ellipse;
  if (s == "l_polyomino" || s == "L-polyomino" || s == "l-polyomino") return ShapeKind::l_polyomino;
  throw InputError("unknown shape kind '" + s + "'");
}

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::l_polyomino: return "l_polyomino";
  }
  return "?";
}

/// Continuous pose; coordinates in pixels with pixel (x, y) covering
/// [x, x+1) x [y, y+1).
struct Pose {
  double cx = 0.0, cy = 0.0;
  double width = 1.0, height = 1.0;
  double angle_deg = 0.0;
};

struct ObjectSpec {
  ShapeKind shape = ShapeKind::rectangle;
  Pose pose;
  /// Entry t moves the object from frame t to t+1. A single entry applies
  /// to every frame; an empty list keeps the object static.
  std::vector<Motion> motion;

  Motion motion_at(int t) const {
    if (motion.empty()) return {};
    if (motion.size() == 1) return motion.front();
    return static_cast<std::size_t>(t) < motion.size() ? motion[static_cast<std::size_t>(t)] : Motion{};
  }

  Pose pose_at(int frame) const {
    Pose p = pose;
    for (int t = 0; t < frame; ++t) {
      const Motion m = motion_at(t);
      p.cx += m.dx;
      p.cy += m.dy;
      p.width *= m.scale;
      p.height *= m.scale;
      p.angle_deg += m.rotation_deg;
    }
    return p;
  }
};

struct SceneSpec {
  std::string video_id = "synth";
  GridShape grid{32, 32};
  int frame_count = 1;
  std::vector<ObjectSpec> objects;
  std::uint64_t seed = 0;
};

struct NoiseSpec {
  double hole_rate = 0.0;
  int boundary_jitter_radius = 0;
  double split_prob = 0.0;
  double false_positive_rate = 0.0;
  double miss_rate = 0.0;
  double objectness_noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    for (double r : {hole_rate, split_prob, false_positive_rate, miss_rate}) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("noise rates must lie in [0,1]");
    }
    if (boundary_jitter_radius < 0) throw ConfigError("boundary_jitter_radius must be >= 0");
    if (!(objectness_noise_sigma >= 0.0)) throw ConfigError("objectness_noise_sigma must be >= 0");
  }
};

struct RenderedScene {
  GroundTruth gt;
  std::vector<std::vector<std::uint8_t>> frames;  ///< 8-bit grayscale images
};

/// Pixel-center inclusion test for one shape.
inline bool shape_contains(ShapeKind kind, const Pose& pose, double px, double py) {
  const double th = pose.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double rx = px - pose.cx, ry = py - pose.cy;
  // Rotate into the object frame (inverse rotation).
  const double ux = c * rx + s * ry;
  const double uy = -s * rx + c * ry;
  const double hw = pose.width / 2.0, hh = pose.height / 2.0;
  switch (kind) {
    case ShapeKind::rectangle:
      return ux >= -hw && ux < hw && uy >= -hh && uy < hh;
    case ShapeKind::ellipse:
      if (hw <= 0 || hh <= 0) return false;
      return (ux / hw) * (ux / hw) + (uy / hh) * (uy / hh) <= 1.0;
    case ShapeKind::l_polyomino:
      // Bounding rectangle minus its upper-right quadrant.
      return ux >= -hw && ux < hw && uy >= -hh && uy < hh && !(ux >= 0 && uy < 0);
  }
  return false;
}

inline std::vector<std::uint8_t> rasterize(ShapeKind kind, const Pose& pose, const GridShape& g) {
  std::vector<std::uint8_t> px(g.pixels(), 0);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      px[static_cast<std::size_t>(y) * g.width + x] = shape_contains(kind, pose, x + 0.5, y + 0.5);
    }
  }
  return px;
}

/// Later objects occlude earlier ones. Objects must cover at least one pixel
/// on frame 0.
inline RenderedScene render_scene(const SceneSpec& spec) {
  if (!spec.grid.valid()) throw InputError("scene grid must be at least 1x1");
  if (spec.frame_count < 1) throw InputError("scene needs at least one frame");
  if (spec.objects.size() > 255) throw InputError("scene has more than 255 objects");
  std::vector<std::vector<std::uint8_t>> labels(
      static_cast<std::size_t>(spec.frame_count), std::vector<std::uint8_t>(spec.grid.pixels(), 0));
  for (std::size_t o = 0; o < spec.objects.size(); ++o) {
    const auto& obj = spec.objects[o];
    for (int f = 0; f < spec.frame_count; ++f) {
      const auto px = rasterize(obj.shape, obj.pose_at(f), spec.grid);
      if (f == 0 && std::none_of(px.begin(), px.end(), [](std::uint8_t v) { return v != 0; })) {
        throw InputError("object " + std::to_string(o + 1) + " has zero area on frame 0");
      }
      auto& frame = labels[static_cast<std::size_t>(f)];
      for (std::size_t i = 0; i < px.size(); ++i) {
        if (px[i]) frame[i] = static_cast<std::uint8_t>(o + 1);
      }
    }
  }
  RenderedScene out;
  // Image intensities: textured background plus a flat gray level per object.
  Rng rng(derive_seed({spec.seed, 0x696d616765ULL}));
  std::vector<std::uint8_t> background(spec.grid.pixels());
  for (auto& b : background) b = static_cast<std::uint8_t>(rng.uniform_int(20, 60));
  for (const auto& frame : labels) {
    std::vector<std::uint8_t> img(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
      img[i] = frame[i] ? static_cast<std::uint8_t>(80 + (frame[i] * 47) % 170) : background[i];
    }
    out.frames.push_back(std::move(img));
  }
  out.gt.shape = spec.grid;
  out.gt.labels = std::move(labels);
  out.gt.object_count = static_cast<int>(spec.objects.size());
  return out;
}

namespace detail {

/// Level for the outermost ring of a jittered proposal.
inline constexpr std::uint8_t kSoftEdgeLevel = 128;

inline void soften_edges(const GridShape& g, std::vector<std::uint8_t>& levels) {
  std::vector<std::uint8_t> fg(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) fg[i] = levels[i] != 0;
  const auto edge = boundary(Mask::from_dense(g, fg)).to_dense();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (edge[i]) levels[i] = std::min(levels[i], kSoftEdgeLevel);
  }
}

}  // namespace detail

/// Turns ground truth into noisy per-frame detections. Every (frame, object)
/// pair draws from its own stream keyed by (seed, frame, object), so changing
/// one rate does not reshuffle the noise elsewhere.
///
/// Per visible object: miss with miss_rate; otherwise erode/dilate by a
/// random radius in [-R, R] with its outer ring softened to ~0.5 (R > 0);
/// with hole_rate punch one rectangular hole; with split_prob cut into two
/// fragments. Objectness is 1 - |N(0, sigma)| clipped to [0, 1]. Each frame
/// additionally receives a false-positive blob with false_positive_rate.
inline std::vector<std::vector<Proposal>> corrupt(const GroundTruth& gt, const NoiseSpec& noise) {
  noise.validate();
  const GridShape g = gt.shape;
  std::vector<std::vector<Proposal>> out(gt.labels.size());
  for (int f = 0; f < gt.frame_count(); ++f) {
    auto& frame_out = out[static_cast<std::size_t>(f)];
    auto emit = [&](std::vector<std::uint8_t> levels, double objectness) {
      if (std::none_of(levels.begin(), levels.end(), [](std::uint8_t v) { return v != 0; })) return;
      Proposal p;
      p.source_frame = f;
      p.id = ProposalId{f, static_cast<int>(frame_out.size())};
      p.prob = ProbMask(g, std::move(levels));
      p.objectness = objectness;
      frame_out.push_back(std::move(p));
    };
    for (int o = 1; o <= gt.object_count; ++o) {
      const auto& labels = gt.labels[static_cast<std::size_t>(f)];
      std::vector<std::uint8_t> levels(labels.size());
      bool visible = false;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        levels[i] = labels[i] == o ? ProbMask::kMaxLevel : 0;
        visible = visible || labels[i] == o;
      }
      if (!visible) continue;

      Rng rng(derive_seed({noise.seed, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(o)}));
      const bool missed = rng.bernoulli(noise.miss_rate);
      const int r = static_cast<int>(
          rng.uniform_int(-noise.boundary_jitter_radius, noise.boundary_jitter_radius));
      const bool hole = rng.bernoulli(noise.hole_rate);
      const bool split = rng.bernoulli(noise.split_prob);
      const bool split_vertical = rng.bernoulli(0.5);
      const double split_at = rng.uniform(0.3, 0.7);
      const double objectness =
          1.0 - std::clamp(std::abs(noise.objectness_noise_sigma * rng.normal()), 0.0, 1.0);
      Rng hole_rng(rng.next());
      if (missed) continue;

      if (noise.boundary_jitter_radius > 0) {
        levels = detail::morph(g, levels, std::abs(r), r > 0);
        detail::soften_edges(g, levels);
      }
      if (hole) detail::punch_hole(g, levels, detail::bounding_box(g, levels), hole_rng);
      if (split) {
        const auto box = detail::bounding_box(g, levels);
        if (!box.empty()) {
          std::vector<std::uint8_t> a(levels.size(), 0), b(levels.size(), 0);
          const int cut = split_vertical
                              ? box.x0 + static_cast<int>(std::floor(box.width() * split_at))
                              : box.y0 + static_cast<int>(std::floor(box.height() * split_at));
          for (int y = 0; y < g.height; ++y) {
            for (int x = 0; x < g.width; ++x) {
              const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
              ((split_vertical ? x : y) < cut ? a : b)[i] = levels[i];
            }
          }
          emit(std::move(a), objectness);
          emit(std::move(b), objectness);
          continue;
        }
      }
      emit(std::move(levels), objectness);
    }

    Rng fp(derive_seed({noise.seed, static_cast<std::uint64_t>(f), 0x66616c7365ULL}));
    if (fp.bernoulli(noise.false_positive_rate)) {
      const int max_side = std::max(3, std::min(g.height, g.width) / 6);
      const int bh = static_cast<int>(fp.uniform_int(std::min(3, g.height), std::min(max_side, g.height)));
      const int bw = static_cast<int>(fp.uniform_int(std::min(3, g.width), std::min(max_side, g.width)));
      const int y0 = static_cast<int>(fp.uniform_int(0, g.height - bh));
      const int x0 = static_cast<int>(fp.uniform_int(0, g.width - bw));
      std::vector<std::uint8_t> levels(g.pixels(), 0);
      for (int y = y0; y < y0 + bh; ++y) {
        for (int x = x0; x < x0 + bw; ++x) levels[static_cast<std::size_t>(y) * g.width + x] = ProbMask::kMaxLevel;
      }
      if (noise.boundary_jitter_radius > 0) detail::soften_edges(g, levels);
      emit(std::move(levels), fp.uniform(0.2, 0.6));
    }
  }
  return out;
}

}  // namespace mcmpg
