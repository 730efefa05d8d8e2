#pragma once

// Binary masks (row-major run-length encoding) and 8-bit probability masks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcmpg/error.hpp"

namespace mcmpg {

struct GridShape {
  int height = 1;
  int width = 1;

  std::size_t pixels() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  bool valid() const { return height >= 1 && width >= 1; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

inline std::string to_string(const GridShape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width);
}

inline void require_same_shape(const GridShape& a, const GridShape& b,
                               std::string_view what) {
  if (!(a == b)) {
    throw ShapeMismatch(std::string(what) + ": incompatible grids " +
                        to_string(a) + " vs " + to_string(b));
  }
}

/// Binary mask stored as alternating background/foreground run lengths in
/// row-major order. The first run is always background (possibly zero long);
/// every later run is nonzero.
class Mask {
 public:
  using Run = std::uint32_t;

  Mask() : Mask(GridShape{}) {}
  explicit Mask(GridShape shape) : shape_(shape) {
    if (!shape.valid()) throw std::invalid_argument("Mask: grid must be at least 1x1");
    runs_.push_back(static_cast<Run>(shape.pixels()));
  }

  /// Builds a mask from arbitrary run lengths; zero-length interior runs are
  /// merged away so equal pixel sets compare equal.
  static Mask from_runs(GridShape shape, std::span<const Run> runs) {
    Mask m(shape);
    std::uint64_t total = 0;
    for (Run r : runs) total += r;
    if (total != shape.pixels()) {
      throw std::invalid_argument("Mask: runs sum to " + std::to_string(total) +
                                  ", grid has " + std::to_string(shape.pixels()) +
                                  " pixels");
    }
    m.runs_.clear();
    bool value = false;  // value of the run currently being accumulated
    Run pending = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const bool run_value = (i % 2) == 1;
      if (runs[i] == 0) continue;
      if (run_value == value) {
        pending += runs[i];
      } else {
        m.runs_.push_back(pending);
        pending = runs[i];
        value = run_value;
      }
    }
    m.runs_.push_back(pending);
    return m;
  }

  static Mask from_runs(GridShape shape, std::initializer_list<Run> runs) {
    return from_runs(shape, std::span<const Run>(runs.begin(), runs.size()));
  }

  /// Nonzero entries are foreground.
  static Mask from_dense(GridShape shape, std::span<const std::uint8_t> pixels) {
    if (pixels.size() != shape.pixels()) {
      throw ShapeMismatch("Mask::from_dense: buffer size does not match grid " +
                          to_string(shape));
    }
    Mask m(shape);
    m.runs_.clear();
    bool value = false;
    Run count = 0;
    for (std::uint8_t p : pixels) {
      const bool v = p != 0;
      if (v != value) {
        m.runs_.push_back(count);
        count = 0;
        value = v;
      }
      ++count;
    }
    m.runs_.push_back(count);
    return m;
  }

  static Mask full(GridShape shape) {
    Mask m(shape);
    m.runs_ = {0, static_cast<Run>(shape.pixels())};
    return m;
  }

  std::vector<std::uint8_t> to_dense() const {
    std::vector<std::uint8_t> out(shape_.pixels(), 0);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      if (i % 2 == 1) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(pos), runs_[i], 1);
      pos += runs_[i];
    }
    return out;
  }

  const GridShape& shape() const { return shape_; }
  const std::vector<Run>& runs() const { return runs_; }

  std::size_t area() const {
    std::size_t a = 0;
    for (std::size_t i = 1; i < runs_.size(); i += 2) a += runs_[i];
    return a;
  }
  bool empty() const { return area() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  GridShape shape_;
  std::vector<Run> runs_;
};

inline std::size_t area(const Mask& m) { return m.area(); }

/// |a ∩ b| computed by merging the two run lists.
inline std::size_t intersection_area(const Mask& a, const Mask& b) {
  require_same_shape(a.shape(), b.shape(), "intersection_area");
  const auto& ra = a.runs();
  const auto& rb = b.runs();
  std::size_t ia = 0, ib = 0;
  std::uint64_t left_a = ra[0], left_b = rb[0];
  std::size_t inter = 0;
  while (ia < ra.size() && ib < rb.size()) {
    const std::uint64_t step = std::min(left_a, left_b);
    if ((ia % 2 == 1) && (ib % 2 == 1)) inter += step;
    left_a -= step;
    left_b -= step;
    while (left_a == 0 && ++ia < ra.size()) left_a = ra[ia];
    while (left_b == 0 && ++ib < rb.size()) left_b = rb[ib];
  }
  return inter;
}

/// Intersection over union. Two empty masks score 0.
inline double iou(const Mask& a, const Mask& b) {
  const std::size_t inter = intersection_area(a, b);
  const std::size_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Per-pixel probability field quantized to 8-bit levels (value = level/255).
class ProbMask {
 public:
  static constexpr int kMaxLevel = 255;

  ProbMask() : ProbMask(GridShape{}) {}
  explicit ProbMask(GridShape shape) : shape_(shape), levels_(shape.pixels(), 0) {
    if (!shape.valid()) throw std::invalid_argument("ProbMask: grid must be at least 1x1");
  }
  ProbMask(GridShape shape, std::vector<std::uint8_t> levels)
      : shape_(shape), levels_(std::move(levels)) {
    if (!shape.valid()) throw std::invalid_argument("ProbMask: grid must be at least 1x1");
    if (levels_.size() != shape.pixels()) {
      throw ShapeMismatch("ProbMask: level buffer does not match grid " + to_string(shape));
    }
  }

  static std::uint8_t quantize(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("ProbMask: probability outside [0,1]");
    return static_cast<std::uint8_t>(std::lround(p * kMaxLevel));
  }

  static ProbMask uniform(GridShape shape, double p) {
    return ProbMask(shape, std::vector<std::uint8_t>(shape.pixels(), quantize(p)));
  }

  /// Foreground pixels become 1.0, background 0.0.
  static ProbMask from_mask(const Mask& m) {
    auto dense = m.to_dense();
    for (auto& v : dense) v = v ? kMaxLevel : 0;
    return ProbMask(m.shape(), std::move(dense));
  }

  const GridShape& shape() const { return shape_; }
  std::span<const std::uint8_t> levels() const { return levels_; }
  std::vector<std::uint8_t>& mutable_levels() { return levels_; }
  std::uint8_t level(std::size_t i) const { return levels_[i]; }
  double value(std::size_t i) const { return levels_[i] / static_cast<double>(kMaxLevel); }

  friend bool operator==(const ProbMask&, const ProbMask&) = default;

 private:
  GridShape shape_;
  std::vector<std::uint8_t> levels_;
};

/// Smallest level whose probability is >= threshold; 256 if none.
inline int threshold_level(double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("binarize: threshold outside [0,1]");
  }
  for (int l = 0; l <= ProbMask::kMaxLevel; ++l) {
    if (l / static_cast<double>(ProbMask::kMaxLevel) >= threshold) return l;
  }
  return ProbMask::kMaxLevel + 1;
}

/// Pixel is foreground iff p(pixel) >= threshold.
inline Mask binarize(const ProbMask& p, double threshold) {
  const int cut = threshold_level(threshold);
  std::vector<std::uint8_t> dense(p.shape().pixels());
  const auto levels = p.levels();
  for (std::size_t i = 0; i < dense.size(); ++i) dense[i] = levels[i] >= cut ? 1 : 0;
  return Mask::from_dense(p.shape(), dense);
}

/// Per-pixel sum of levels divided by `divisor`, rounded half up, clamped to 1.
inline ProbMask average(std::span<const ProbMask* const> masks, int divisor) {
  if (masks.empty()) throw std::invalid_argument("average: empty mask list");
  if (divisor < 1) throw std::invalid_argument("average: divisor must be >= 1");
  const GridShape shape = masks.front()->shape();
  std::vector<std::uint32_t> sums(shape.pixels(), 0);
  for (const ProbMask* m : masks) {
    require_same_shape(shape, m->shape(), "average");
    const auto levels = m->levels();
    for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += levels[i];
  }
  const auto d = static_cast<std::uint32_t>(divisor);
  std::vector<std::uint8_t> out(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    const std::uint32_t q = (2 * sums[i] + d) / (2 * d);
    out[i] = static_cast<std::uint8_t>(std::min<std::uint32_t>(q, ProbMask::kMaxLevel));
  }
  return ProbMask(shape, std::move(out));
}

inline ProbMask average(std::span<const ProbMask> masks, int divisor) {
  std::vector<const ProbMask*> ptrs;
  ptrs.reserve(masks.size());
  for (const auto& m : masks) ptrs.push_back(&m);
  return average(std::span<const ProbMask* const>(ptrs), divisor);
}

/// Foreground pixels with a 4-neighbour that is background or off-grid.
inline Mask boundary(const Mask& m) {
  const int h = m.shape().height, w = m.shape().width;
  const auto src = m.to_dense();
  std::vector<std::uint8_t> out(src.size(), 0);
  auto fg = [&](int y, int x) {
    return y >= 0 && y < h && x >= 0 && x < w && src[static_cast<std::size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fg(y, x)) continue;
      if (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)) {
        out[static_cast<std::size_t>(y) * w + x] = 1;
      }
    }
  }
  return Mask::from_dense(m.shape(), out);
}

// COCO-style compact counts string (delta + 5-bit varint, offset 48), applied
// to our row-major runs.
inline std::string encode_counts_string(std::span<const Mask::Run> runs) {
  std::string s;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    long long x = runs[i];
    if (i > 2) x -= static_cast<long long>(runs[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

inline std::vector<Mask::Run> decode_counts_string(std::string_view s) {
  std::vector<long long> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw std::invalid_argument("counts string truncated");
      const int c = static_cast<unsigned char>(s[p]) - 48;
      if (c < 0 || c > 63) throw std::invalid_argument("counts string has invalid character");
      x |= static_cast<long long>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    counts.push_back(x);
  }
  std::vector<Mask::Run> out;
  out.reserve(counts.size());
  for (long long c : counts) {
    if (c < 0) throw std::invalid_argument("counts string decodes to a negative run");
    out.push_back(static_cast<Mask::Run>(c));
  }
  return out;
}

}  // namespace mcmpg
