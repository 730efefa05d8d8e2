#include <gtest/gtest.h>

#include "mcmpg/propagation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mcmpg;

namespace {

const GridShape k8{8, 8};

VideoContext video(int frames, GridShape g = k8) {
  VideoContext v;
  v.video_id = "v";
  v.grid = g;
  v.frame_count = frames;
  return v;
}

Proposal proposal(const Mask& m, FrameId f) {
  Proposal p;
  p.source_frame = f;
  p.prob = ProbMask::from_mask(m);
  p.id = {f, 0};
  return p;
}

std::string plugin(const std::string& mode) {
  return std::string("python3 ") + MCMPG_FIXTURES + "/plugin.py " + mode;
}

}  // namespace

TEST(Identity, ReturnsSourceUnchanged) {
  Rng rng(1);
  IdentityPropagator id;
  const ProbMask p = oracle::random_prob(rng, k8);
  EXPECT_EQ(id.propagate(video(5), p, 2, 2), p);
  EXPECT_EQ(id.propagate(video(5), p, 0, 4), p);
}

TEST(Propagate, ValidatesFrames) {
  IdentityPropagator id;
  const auto p = proposal(oracle::rect(k8, 0, 0, 2, 2), 1);
  EXPECT_THROW(propagate(id, video(3), p, 3), PropagationError);
  EXPECT_THROW(propagate(id, video(1), p, 0), PropagationError);
  const auto out = propagate(id, video(3), p, 2);
  EXPECT_EQ(out.origin_frame, 1);
  EXPECT_EQ(out.target_frame, 2);
  EXPECT_EQ(out.origin, (ProposalId{1, 0}));
}

TEST(Affine, TranslationTwoFrameGapDropsOffGrid) {
  AffinePropagator aff(MotionTable{{2, 0, 1, 0}, {2, 0, 1, 0}});
  // Columns 1-2 and 5-6 of rows 2-3; after +4 columns only the first block
  // stays on the grid.
  Mask in = Mask::from_dense(k8, [] {
    std::vector<std::uint8_t> px(64, 0);
    for (int y : {2, 3}) {
      for (int x : {1, 2, 5, 6}) px[static_cast<std::size_t>(y * 8 + x)] = 1;
    }
    return px;
  }());
  const Mask out = binarize(aff.propagate(video(3), ProbMask::from_mask(in), 0, 2), 0.5);
  EXPECT_EQ(out, oracle::rect(k8, 2, 5, 2, 2));
  // And back again.
  const Mask back = binarize(aff.propagate(video(3), ProbMask::from_mask(out), 2, 0), 0.5);
  EXPECT_EQ(back, oracle::rect(k8, 2, 1, 2, 2));
}

TEST(Affine, ScaleAboutCenter) {
  AffinePropagator aff(MotionTable{{0, 0, 2, 0}});
  const Mask in = oracle::rect(k8, 3, 3, 2, 2);
  const Mask out = binarize(aff.propagate(video(2), ProbMask::from_mask(in), 0, 1), 0.5);
  EXPECT_EQ(out, oracle::rect(k8, 2, 2, 4, 4));
}

TEST(Affine, QuarterTurnsPreserveAreaAndCompose) {
  MotionTable t(4, Motion{0, 0, 1, 90});
  AffinePropagator aff(t);
  Rng rng(2);
  const Mask in = oracle::random_mask(rng, k8, 0.4);
  const auto p = ProbMask::from_mask(in);
  for (int f = 1; f <= 4; ++f) {
    EXPECT_EQ(binarize(aff.propagate(video(5), p, 0, f), 0.5).area(), in.area()) << f;
  }
  EXPECT_EQ(binarize(aff.propagate(video(5), p, 0, 4), 0.5), in);
}

TEST(Affine, AreaNeverGrowsUnderTranslation) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    MotionTable t;
    for (int f = 0; f < 4; ++f) {
      t.push_back({static_cast<double>(rng.uniform_int(-3, 3)), static_cast<double>(rng.uniform_int(-3, 3)), 1, 0});
    }
    AffinePropagator aff(t);
    const Mask in = oracle::random_mask(rng, k8, 0.3);
    const int to = static_cast<int>(rng.uniform_int(0, 4));
    const int from = static_cast<int>(rng.uniform_int(0, 4));
    EXPECT_LE(binarize(aff.propagate(video(5), ProbMask::from_mask(in), from, to), 0.5).area(), in.area());
  }
}

TEST(TrackBidirectional, AffineHandComputation) {
  // Per-frame motion: +2 columns, +1 column, -1 column, +1 row.
  AffinePropagator aff(MotionTable{{2, 0, 1, 0}, {1, 0, 1, 0}, {-1, 0, 1, 0}, {0, 1, 1, 0}});
  const Mask key = oracle::rect(k8, 3, 4, 2, 2);  // on frame 2
  const auto attempts = track_bidirectional(aff, video(5), 2, {key}, 7);
  ASSERT_EQ(attempts.size(), 1u);
  ASSERT_TRUE(attempts[0].track);
  const Track& t = *attempts[0].track;
  EXPECT_EQ(t.track_id, 7);
  EXPECT_EQ(t.key_frame, 2);
  ASSERT_EQ(t.frame_count(), 5);
  EXPECT_EQ(t.masks[0], oracle::rect(k8, 3, 1, 2, 2));
  EXPECT_EQ(t.masks[1], oracle::rect(k8, 3, 3, 2, 2));
  EXPECT_EQ(t.masks[2], key);
  EXPECT_EQ(t.masks[3], oracle::rect(k8, 3, 3, 2, 2));
  EXPECT_EQ(t.masks[4], oracle::rect(k8, 4, 3, 2, 2));
}

TEST(TrackBidirectional, IdentityRepeatsMask) {
  IdentityPropagator id;
  Rng rng(4);
  const Mask m = oracle::random_mask(rng, k8, 0.5);
  const auto a = track_bidirectional(id, video(6), 3, {m});
  ASSERT_TRUE(a[0].track);
  for (const auto& f : a[0].track->masks) EXPECT_EQ(f, m);
  const auto single = track_bidirectional(id, video(1), 0, {m});
  ASSERT_EQ(single[0].track->frame_count(), 1);
  EXPECT_EQ(single[0].track->masks[0], m);
}

TEST(Noisy, DeterministicAndOrderIndependent) {
  Rng rng(5);
  const ProbMask a = ProbMask::from_mask(oracle::rect(GridShape{16, 16}, 3, 3, 8, 9));
  const ProbMask b = ProbMask::from_mask(oracle::rect(GridShape{16, 16}, 1, 6, 5, 5));
  NoisyPropagator p1(42, 1.0), p2(42, 1.0), p3(43, 1.0);
  const auto v = video(4, GridShape{16, 16});
  const auto a1 = p1.propagate(v, a, 0, 3);
  const auto b1 = p1.propagate(v, b, 1, 2);
  const auto b2 = p2.propagate(v, b, 1, 2);
  const auto a2 = p2.propagate(v, a, 0, 3);
  EXPECT_EQ(a1, a2);
  EXPECT_EQ(b1, b2);
  bool differs = false;
  for (int f = 0; f < 4; ++f) differs |= !(p1.propagate(v, a, 0, f) == p3.propagate(v, a, 0, f));
  EXPECT_TRUE(differs);
}

TEST(Noisy, MorphMatchesSquareFilter) {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const GridShape g{1 + static_cast<int>(rng.uniform_int(0, 9)), 1 + static_cast<int>(rng.uniform_int(0, 9))};
    const ProbMask p = oracle::random_prob(rng, g);
    const int r = static_cast<int>(rng.uniform_int(0, 2));
    const bool dilate = rng.bernoulli(0.5);
    const auto got = detail::morph(g, p.levels(), r, dilate);
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        int v = dilate ? 0 : 255;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = y + dy, xx = x + dx;
            const int s = (yy < 0 || xx < 0 || yy >= g.height || xx >= g.width) ? 0 : p.level(static_cast<std::size_t>(yy * g.width + xx));
            v = dilate ? std::max(v, s) : std::min(v, s);
          }
        }
        EXPECT_EQ(got[static_cast<std::size_t>(y * g.width + x)], v);
      }
    }
  }
}

TEST(PropagatorSpec, ParsesKinds) {
  EXPECT_EQ(parse_propagator_kind("affine-motion"), PropagatorSpec::Kind::affine);
  EXPECT_EQ(parse_propagator_kind("noisy"), PropagatorSpec::Kind::noisy);
  EXPECT_THROW(parse_propagator_kind("optical-flow"), ConfigError);
  PropagatorSpec s;
  s.kind = PropagatorSpec::Kind::plugin;
  EXPECT_THROW(make_propagator(s), ConfigError);
}

TEST(Plugin, IdentityRoundTrip) {
  TempDir tmp;
  auto v = video(3);
  v.scratch_dir = tmp.path;
  PluginPropagator p(plugin("identity"), 1);
  Rng rng(7);
  const ProbMask src = oracle::random_prob(rng, k8);
  EXPECT_EQ(p.propagate(v, src, 0, 2), src);
  EXPECT_EQ(p.propagate(v, src, 2, 0), src);
  EXPECT_TRUE(std::filesystem::is_empty(tmp.path));
}

TEST(Plugin, ShiftTracksLikeAffine) {
  TempDir tmp;
  auto v = video(4);
  v.scratch_dir = tmp.path;
  PluginPropagator p(plugin("shift"), 2);
  AffinePropagator aff(MotionTable(4, Motion{1, 0, 1, 0}));
  const Mask key = oracle::rect(k8, 2, 3, 3, 2);
  const auto a = track_bidirectional(p, v, 1, {key});
  const auto b = track_bidirectional(aff, v, 1, {key});
  ASSERT_TRUE(a[0].track) << a[0].error;
  EXPECT_EQ(a[0].track->masks, b[0].track->masks);
}

TEST(Plugin, ErrorsCarryDiagnostics) {
  TempDir tmp;
  auto v = video(3);
  v.scratch_dir = tmp.path;
  const ProbMask src = ProbMask::uniform(k8, 1.0);
  try {
    PluginPropagator(plugin("error"), 1).propagate(v, src, 0, 2);
    FAIL() << "expected PropagationError";
  } catch (const PropagationError& e) {
    EXPECT_NE(std::string(e.what()).find("cannot track frame 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(PluginPropagator(plugin("garbage"), 1).propagate(v, src, 0, 1), PropagationError);
  EXPECT_THROW(PluginPropagator(plugin("exit"), 1).propagate(v, src, 0, 1), PropagationError);
  EXPECT_THROW(PluginPropagator("false", 1).propagate(v, src, 0, 1), PropagationError);
}

TEST(Plugin, FailedTrackIsReportedPerTrack) {
  TempDir tmp;
  auto v = video(3);
  v.scratch_dir = tmp.path;
  PluginPropagator p(plugin("error"), 1);
  const auto a = track_bidirectional(p, v, 0, {oracle::rect(k8, 0, 0, 2, 2), oracle::rect(k8, 4, 4, 2, 2)});
  ASSERT_EQ(a.size(), 2u);
  for (const auto& t : a) {
    EXPECT_FALSE(t.track);
    EXPECT_FALSE(t.error.empty());
  }
}
