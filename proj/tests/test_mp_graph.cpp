#include <gtest/gtest.h>

#include "mcmpg/io.hpp"
#include "mcmpg/mp_graph.hpp"
#include "oracles.hpp"

using namespace mcmpg;

namespace {

std::vector<std::vector<int>> adjacency(const std::vector<std::vector<bool>>& m) {
  std::vector<std::vector<int>> adj(m.size());
  for (std::size_t u = 0; u < m.size(); ++u) {
    for (std::size_t v = 0; v < m.size(); ++v) {
      if (u != v && m[u][v]) adj[u].push_back(static_cast<int>(v));
    }
  }
  return adj;
}

std::vector<std::vector<bool>> random_graph(Rng& rng, int n, double density) {
  std::vector<std::vector<bool>> m(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n), false));
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      m[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)] = m[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)] = rng.bernoulli(density);
    }
  }
  return m;
}

PropagatedProposal vertex(const Mask& m, FrameId origin = 0, int index = 0) {
  return {origin, 0, ProbMask::from_mask(m), {origin, index}};
}

// Three masks on a 1x12 strip: IoU(A,B) = IoU(B,C) = 0.6, IoU(A,C) = 1/3.
std::vector<PropagatedProposal> strip_fixture() {
  const GridShape g{1, 12};
  return {vertex(oracle::rect(g, 0, 0, 1, 8), 0, 0), vertex(oracle::rect(g, 0, 2, 1, 8), 1, 0),
          vertex(oracle::rect(g, 0, 4, 1, 8), 2, 0)};
}

}  // namespace

TEST(MaximalCliques, SmallGraphs) {
  using Adj = std::vector<std::vector<int>>;
  EXPECT_EQ(maximal_cliques(Adj{{1, 2}, {0, 2}, {0, 1}}), (Adj{{0, 1, 2}}));
  EXPECT_EQ(maximal_cliques(Adj{{1}, {0, 2}, {1}}), (Adj{{0, 1}, {1, 2}}));
  EXPECT_EQ(maximal_cliques(Adj{{}, {}, {}}), (Adj{{0}, {1}, {2}}));
  EXPECT_TRUE(maximal_cliques(Adj{}).empty());
}

TEST(MaximalCliques, MatchesSubsetEnumeration) {
  Rng rng(20);
  for (int seed = 0; seed < 200; ++seed) {
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    const double density = std::array{0.1, 0.3, 0.5, 0.8}[static_cast<std::size_t>(seed % 4)];
    const auto m = random_graph(rng, n, density);
    const auto got = maximal_cliques(adjacency(m));
    const auto expect = oracle::maximal_cliques(m);
    EXPECT_EQ(std::set<std::vector<int>>(got.begin(), got.end()), expect) << "seed " << seed;
    EXPECT_EQ(got.size(), expect.size()) << "duplicates, seed " << seed;
    EXPECT_TRUE(std::is_sorted(got.begin(), got.end()));
  }
}

TEST(MaximalCliques, CompleteAndMaximalOnGraph) {
  Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    const GridShape g{6, 6};
    std::vector<PropagatedProposal> props;
    const int n = static_cast<int>(rng.uniform_int(1, 9));
    for (int k = 0; k < n; ++k) props.push_back(vertex(oracle::random_mask(rng, g, 0.6), k, 0));
    const MPGraph graph = build_graph(props, 0.4);
    for (const auto& c : maximal_cliques(graph)) {
      for (std::size_t a = 0; a < c.size(); ++a) {
        for (std::size_t b = a + 1; b < c.size(); ++b) EXPECT_TRUE(graph.adjacent(c.members[a], c.members[b]));
      }
      for (int v = 0; v < n; ++v) {
        if (std::binary_search(c.members.begin(), c.members.end(), v)) continue;
        const bool extends = std::all_of(c.members.begin(), c.members.end(), [&](int u) { return graph.adjacent(u, v); });
        EXPECT_FALSE(extends);
      }
    }
  }
}

TEST(BuildGraph, StrictThresholdAndStripFixture) {
  const MPGraph g = build_graph(strip_fixture(), 0.5);
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_DOUBLE_EQ(g.edges[0].iou, 0.6);
  EXPECT_DOUBLE_EQ(g.edges[1].iou, 0.6);
  EXPECT_FALSE(g.adjacent(0, 2));
  const auto cliques = maximal_cliques(g);
  ASSERT_EQ(cliques.size(), 2u);
  EXPECT_EQ(cliques[0].members, (std::vector<int>{0, 1}));
  EXPECT_EQ(cliques[1].members, (std::vector<int>{1, 2}));
  // IoU exactly at t0 is not an edge.
  EXPECT_TRUE(build_graph(strip_fixture(), 0.6).edges.empty());
}

TEST(BuildGraph, EmptyMasksNeverConnect) {
  const GridShape g{4, 4};
  const MPGraph graph = build_graph({vertex(Mask(g)), vertex(Mask(g))}, 0.0);
  EXPECT_TRUE(graph.edges.empty());
}

TEST(Vote, FullCliqueOfIdenticalMembersIsBinarize) {
  Rng rng(22);
  for (int i = 0; i < 30; ++i) {
    const GridShape g{5, 5};
    const ProbMask p = oracle::random_prob(rng, g);
    for (int h : {1, 3, 5}) {
      std::vector<PropagatedProposal> props(static_cast<std::size_t>(h), PropagatedProposal{0, 0, p, {}});
      Clique c;
      for (int k = 0; k < h; ++k) c.members.push_back(k);
      const auto kp = vote(c, props, VoteParams{h, 0.2, 0, VoteDivisor::clip_size});
      ASSERT_TRUE(kp);
      EXPECT_EQ(kp->mask, binarize(p, 0.2));
    }
  }
}

TEST(Vote, DivisorHSuppressesSmallCliques) {
  const GridShape g{4, 4};
  // One member at 0.5 everywhere: 0.5/3 = 0.167 < 0.2 with divisor H,
  // 0.5/1 with divisor n.
  std::vector<PropagatedProposal> props{{0, 0, ProbMask::uniform(g, 0.5), {}}};
  EXPECT_FALSE(vote(Clique{{0}}, props, VoteParams{3, 0.2, 0, VoteDivisor::clip_size}));
  const auto kp = vote(Clique{{0}}, props, VoteParams{3, 0.2, 0, VoteDivisor::members});
  ASSERT_TRUE(kp);
  EXPECT_EQ(kp->mask, Mask::full(g));
}

TEST(Vote, MinAreaDropsSmallResults) {
  const GridShape g{4, 4};
  std::vector<PropagatedProposal> props{{0, 0, ProbMask::from_mask(oracle::rect(g, 0, 0, 3, 3)), {}}};
  EXPECT_TRUE(vote(Clique{{0}}, props, VoteParams{1, 0.2, 9, VoteDivisor::clip_size}));
  EXPECT_FALSE(vote(Clique{{0}}, props, VoteParams{1, 0.2, 10, VoteDivisor::clip_size}));
}

TEST(Vote, MatchesExactOracle) {
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    const GridShape g{1 + static_cast<int>(rng.uniform_int(0, 7)), 1 + static_cast<int>(rng.uniform_int(0, 7))};
    const int h = 1 + 2 * static_cast<int>(rng.uniform_int(0, 3));
    const int n = static_cast<int>(rng.uniform_int(1, h));
    const int t1_milli = static_cast<int>(rng.uniform_int(0, 1000));
    std::vector<PropagatedProposal> props;
    Clique c;
    for (int k = 0; k < n; ++k) {
      props.push_back({k, 0, oracle::random_prob(rng, g), {k, 0}});
      c.members.push_back(k);
    }
    const auto kp = vote(c, props, VoteParams{h, t1_milli / 1000.0, 0, VoteDivisor::clip_size});
    std::vector<const ProbMask*> members;
    for (const auto& p : props) members.push_back(&p.prob);
    const auto expect = oracle::vote(members, h, oracle::Q(t1_milli, 1000));
    if (oracle::count(expect) == 0) {
      EXPECT_FALSE(kp) << i;
    } else {
      ASSERT_TRUE(kp) << i;
      EXPECT_EQ(kp->mask.to_dense(), expect) << i;
    }
  }
}

TEST(Vote, AddingMemberNeverLowersVote) {
  Rng rng(24);
  for (int i = 0; i < 100; ++i) {
    const GridShape g{4, 6};
    std::vector<PropagatedProposal> props;
    for (int k = 0; k < 5; ++k) props.push_back({k, 0, oracle::random_prob(rng, g), {k, 0}});
    const int n = static_cast<int>(rng.uniform_int(1, 4));
    Clique small, big;
    for (int k = 0; k < n; ++k) small.members.push_back(k);
    big = small;
    big.members.push_back(n);
    const VoteParams params{5, 0.0, 0, VoteDivisor::clip_size};
    const auto a = vote(small, props, params), b = vote(big, props, params);
    ASSERT_TRUE(a && b);
    for (std::size_t p = 0; p < g.pixels(); ++p) EXPECT_LE(a->vote.level(p), b->vote.level(p));
  }
}

TEST(RefineKeyframe, SingleFrameSingleProposal) {
  const GridShape g{6, 6};
  Rng rng(25);
  Proposal p;
  p.prob = oracle::random_prob(rng, g);
  std::vector<std::vector<Proposal>> dets{{p}};
  VideoContext v{"v", g, 1, {}, {}};
  IdentityPropagator id;
  const auto out = refine_keyframe(build_clip(0, 1, 1), dets, id, v, RefineParams{0.5, {1, 0.2, 0, VoteDivisor::clip_size}});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].mask, binarize(p.prob, 0.2));
  EXPECT_EQ(out[0].sources, (std::vector<ProposalId>{{0, 0}}));

  // With H = 3 on a one-frame video the single member is divided by 3.
  const auto truncated = refine_keyframe(build_clip(0, 3, 1), dets, id, v, RefineParams{0.5, {3, 0.2, 0, VoteDivisor::clip_size}});
  const ProbMask* member = &p.prob;
  const Mask expect = binarize(average(std::span<const ProbMask* const>(&member, 1), 3), 0.2);
  if (expect.empty()) {
    EXPECT_TRUE(truncated.empty());
  } else {
    ASSERT_EQ(truncated.size(), 1u);
    EXPECT_EQ(truncated[0].mask, expect);
  }
}

TEST(RefineKeyframe, NoProposalsNoOutput) {
  const GridShape g{6, 6};
  std::vector<std::vector<Proposal>> dets(5);
  VideoContext v{"v", g, 5, {}, {}};
  IdentityPropagator id;
  EXPECT_TRUE(refine_keyframe(build_clip(2, 3, 5), dets, id, v, RefineParams{}).empty());
}

TEST(RefineKeyframe, VotingRepairsHoles) {
  const json fixture = read_json_file(std::string(MCMPG_FIXTURES) + "/refine_holes.json");
  const VideoInput in = synthetic_video_input(scene_from_json(fixture["scene"]), noise_from_json(fixture["noise"]));
  const Mask gt = in.gt->object_mask(1, 1);
  double best_input = 0.0;
  for (const auto& frame : in.detections) {
    ASSERT_EQ(frame.size(), 1u);
    best_input = std::max(best_input, iou(binarize(frame[0].prob, 0.5), gt));
  }
  ASSERT_LT(best_input, 1.0);
  IdentityPropagator id;
  const auto out = refine_keyframe(build_clip(1, 3, 3), in.detections, id, in.video, RefineParams{});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].clique.size(), 3u);
  EXPECT_GT(iou(out[0].mask, gt), best_input);
}

TEST(RefineKeyframe, IndependentOfDetectionOrder) {
  Rng rng(26);
  const GridShape g{8, 8};
  for (int i = 0; i < 20; ++i) {
    std::vector<std::vector<Proposal>> dets(3);
    for (int f = 0; f < 3; ++f) {
      const int n = static_cast<int>(rng.uniform_int(0, 3));
      for (int k = 0; k < n; ++k) {
        Proposal p;
        p.source_frame = f;
        p.prob = ProbMask::from_mask(oracle::rect(g, static_cast<int>(rng.uniform_int(0, 3)), static_cast<int>(rng.uniform_int(0, 3)), 4, 4));
        p.id = {f, k};
        dets[static_cast<std::size_t>(f)].push_back(p);
      }
    }
    auto shuffled = dets;
    for (auto& f : shuffled) std::reverse(f.begin(), f.end());
    VideoContext v{"v", g, 3, {}, {}};
    IdentityPropagator id;
    const RefineParams params{0.5, {3, 0.2, 1, VoteDivisor::clip_size}};
    const auto a = refine_keyframe(build_clip(1, 3, 3), dets, id, v, params);
    const auto b = refine_keyframe(build_clip(1, 3, 3), shuffled, id, v, params);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].mask, b[k].mask);
    for (std::size_t x = 0; x < a.size(); ++x) {
      for (std::size_t y = x + 1; y < a.size(); ++y) EXPECT_FALSE(a[x].mask == a[y].mask);
    }
  }
}

TEST(RefineKeyframe, PropagationErrorsNameTheKeyFrame) {
  class Failing final : public Propagator {
   public:
    ProbMask propagate(const VideoContext&, const ProbMask&, FrameId, FrameId) override {
      throw PropagationError("boom");
    }
  } failing;
  const GridShape g{4, 4};
  Proposal p;
  p.prob = ProbMask::uniform(g, 1.0);
  std::vector<std::vector<Proposal>> dets{{p}};
  VideoContext v{"v", g, 1, {}, {}};
  try {
    refine_keyframe(build_clip(0, 1, 1), dets, failing, v, RefineParams{});
    FAIL();
  } catch (const PropagationError& e) {
    EXPECT_NE(std::string(e.what()).find("key frame 0"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(ToDot, LabelsVerticesAndEdges) {
  const std::string dot = to_dot(build_graph(strip_fixture(), 0.5), "k0");
  EXPECT_NE(dot.find("graph \"k0\""), std::string::npos);
  EXPECT_NE(dot.find("v0 [label=\"0/0\"]"), std::string::npos);
  EXPECT_NE(dot.find("v0 -- v1 [label=\"0.600\"]"), std::string::npos);
  EXPECT_EQ(dot.find("v0 -- v2"), std::string::npos);
}
