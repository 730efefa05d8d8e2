#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "mcmpg/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mcmpg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

SceneSpec static_scene() {
  SceneSpec s;
  s.video_id = "still";
  s.grid = GridShape{24, 32};
  s.frame_count = 6;
  ObjectSpec a, b;
  a.pose = Pose{9, 9, 10, 8, 0};
  b.shape = ShapeKind::ellipse;
  b.pose = Pose{22, 15, 10, 12, 0};
  s.objects = {a, b};
  return s;
}

SceneSpec moving_scene() {
  SceneSpec s = static_scene();
  s.video_id = "moving";
  s.objects[0].motion = {Motion{1, 0, 1, 0}};
  s.objects[1].motion = {Motion{0, -1, 1, 0}};
  return s;
}

NoiseSpec noisy(std::uint64_t seed) {
  NoiseSpec n;
  n.hole_rate = 0.3;
  n.boundary_jitter_radius = 2;
  n.miss_rate = 0.1;
  n.false_positive_rate = 0.3;
  n.seed = seed;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MCMPG_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunVideo, NoiseFreeStaticSceneIsPerfect) {
  const auto in = synthetic_video_input(static_scene(), NoiseSpec{});
  IdentityPropagator id;
  PipelineConfig cfg;
  const auto r = run_video(cfg, in, id);
  EXPECT_FALSE(r.partial_failure());
  EXPECT_EQ(r.stage_one.keyframes, (std::vector<FrameId>{0, 3}));
  ASSERT_EQ(r.tracks.size(), 2u);
  for (int f = 0; f < in.video.frame_count; ++f) {
    const auto& labels = r.labels.frames[static_cast<std::size_t>(f)];
    std::vector<std::uint8_t> px(labels.size());
    for (int o = 1; o <= 2; ++o) {
      const std::uint8_t l = labels[in.gt->object_mask(o, f).runs()[0]];
      for (std::size_t i = 0; i < px.size(); ++i) px[i] = labels[i] == l;
      EXPECT_EQ(Mask::from_dense(in.video.grid, px), in.gt->object_mask(o, f)) << f;
    }
  }
  const auto rep = evaluate_result(cfg, in, r);
  EXPECT_EQ(rep.mean_jf(), 1.0);
  EXPECT_EQ(rep.proposals->miou(), 1.0);
}

TEST(RunVideo, AffinePropagatorFollowsKnownMotion) {
  const auto in = synthetic_video_input(moving_scene(), NoiseSpec{});
  PipelineConfig cfg;
  SceneSpec one = moving_scene();
  one.objects.resize(1);
  const auto single = synthetic_video_input(one, NoiseSpec{});
  AffinePropagator aff(MotionTable(5, Motion{1, 0, 1, 0}));
  const auto r = run_video(cfg, single, aff);
  EXPECT_EQ(evaluate_result(cfg, single, r).mean_j(), 1.0);
  IdentityPropagator id;
  EXPECT_LT(evaluate_result(cfg, in, run_video(cfg, in, id)).mean_j(), 1.0);
}

TEST(RunVideo, EmptyDetectionsGiveBackground) {
  NoiseSpec n;
  n.miss_rate = 1.0;
  const auto in = synthetic_video_input(static_scene(), n);
  IdentityPropagator id;
  const auto r = run_video(PipelineConfig{}, in, id);
  EXPECT_TRUE(r.tracks.tracks.empty());
  EXPECT_FALSE(r.partial_failure());
  for (const auto& f : r.labels.frames) EXPECT_TRUE(std::all_of(f.begin(), f.end(), [](auto v) { return v == 0; }));
  EXPECT_EQ(evaluate_result(PipelineConfig{}, in, r).mean_jf(), 0.0);
}

TEST(RunVideo, WorkerCountDoesNotChangeResults) {
  const auto in = synthetic_video_input(moving_scene(), noisy(3));
  PipelineConfig cfg;
  cfg.keyframes = 3;
  NoisyPropagator p1(5, 0.5), p2(5, 0.5);
  const auto a = run_video(cfg, in, p1, 1), b = run_video(cfg, in, p2, 4);
  EXPECT_EQ(sequences_to_json("v", in.video.grid, 6, a.tracks).dump(),
            sequences_to_json("v", in.video.grid, 6, b.tracks).dump());
  EXPECT_EQ(a.labels.frames, b.labels.frames);
}

TEST(RunVideo, TooManyKeyFramesWarns) {
  const auto in = synthetic_video_input(static_scene(), NoiseSpec{});
  PipelineConfig cfg;
  cfg.keyframes = 10;
  IdentityPropagator id;
  testing::internal::CaptureStderr();
  const auto r = run_stage_one(cfg, in, id);
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_EQ(r.keyframes.size(), 6u);
  EXPECT_NE(err.find("warning: still: 10 key frames requested"), std::string::npos) << err;
}

TEST(RunVideo, NoGraphBaselineUsesRawDetections) {
  const auto in = synthetic_video_input(static_scene(), noisy(8));
  PipelineConfig cfg;
  cfg.use_mpgraph = false;
  IdentityPropagator id;
  const auto r = run_stage_one(cfg, in, id);
  EXPECT_FALSE(r.proposals.empty());
  for (const auto& p : r.proposals) {
    ASSERT_EQ(p.sources.size(), 1u);
    EXPECT_EQ(p.sources[0].frame, p.key_frame);
    const auto& d = in.detections[static_cast<std::size_t>(p.key_frame)][static_cast<std::size_t>(p.sources[0].index)];
    EXPECT_EQ(p.mask, binarize(d.prob, 0.5));
    EXPECT_GE(p.mask.area(), cfg.min_area);
  }
}

TEST(Corpus, RunWritesOutputsAndReport) {
  TempDir tmp;
  write_synthetic_video(tmp / "corpus" / "still", static_scene(), NoiseSpec{});
  write_synthetic_video(tmp / "corpus" / "moving", moving_scene(), noisy(1));
  fs::create_directories(tmp / "corpus" / "not_a_video");
  PipelineConfig cfg;
  cfg.workers = 2;
  CorpusOptions opts;
  opts.svg = true;
  const auto rep = run_corpus(cfg, tmp / "corpus", tmp / "out", opts);
  ASSERT_EQ(rep.videos.size(), 2u);
  EXPECT_EQ(rep.videos[0].video_id, "moving");
  EXPECT_EQ(rep.videos[1].mean_jf(), 1.0);
  for (const char* v : {"still", "moving"}) {
    EXPECT_TRUE(fs::exists(tmp / "out" / v / "sequences.json"));
    EXPECT_TRUE(fs::exists(tmp / "out" / v / "keyframe_proposals.json"));
    EXPECT_TRUE(fs::exists(tmp / "out" / v / "labels" / "00005.png"));
    EXPECT_TRUE(fs::exists(tmp / "out" / v / "j_curves.svg"));
  }
  EXPECT_TRUE(fs::exists(tmp / "out" / "report.json"));
  EXPECT_TRUE(fs::exists(tmp / "out" / "report.csv"));
  EXPECT_FALSE(fs::exists(tmp / "out" / ".scratch"));
  EXPECT_THROW(run_corpus(cfg, tmp / "corpus" / "not_a_video", tmp / "out2"), InputError);
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  write_synthetic_video(tmp / "corpus" / "still", static_scene(), NoiseSpec{});
  const auto log = tmp / "log.txt";
  const std::string corpus = "--corpus '" + (tmp / "corpus").string() + "'";

  EXPECT_EQ(cli("run " + corpus + " --out '" + (tmp / "ok").string() + "'", log), 0) << slurp(log);
  EXPECT_NE(slurp(log).find("J&F 1.0000"), std::string::npos) << slurp(log);
  const json report = json::parse(slurp(tmp / "ok" / "report.json"));
  EXPECT_EQ(report["mean"]["JF"], 1.0);

  EXPECT_EQ(cli("run " + corpus + " --out '" + (tmp / "x").string() + "' --t0 2", log), 2) << slurp(log);
  EXPECT_EQ(cli("run " + corpus + " --out '" + (tmp / "x").string() + "' --clip-size 4", log), 2);
  EXPECT_EQ(cli("run " + corpus + " --out '" + (tmp / "x").string() + "' --bogus", log), 2);
  EXPECT_EQ(cli("frobnicate", log), 2);
  EXPECT_EQ(cli("run --manifest '" + (tmp / "nope.json").string() + "' --out '" + (tmp / "x").string() + "'", log), 3);
  EXPECT_EQ(cli("run --corpus '" + (tmp / "empty").string() + "' --out '" + (tmp / "x").string() + "'", log), 3);

  const std::string plugin = std::string("python3 ") + MCMPG_FIXTURES + "/plugin.py error";
  EXPECT_EQ(cli("run " + corpus + " --out '" + (tmp / "partial").string() + "' --propagator plugin --plugin-command '" +
                    plugin + "'",
                log),
            4)
      << slurp(log);
  EXPECT_NE(slurp(log).find("cannot track frame"), std::string::npos) << slurp(log);
  EXPECT_TRUE(fs::exists(tmp / "partial" / "report.json"));
}

TEST(Cli, RefineEvalAndGraphDump) {
  TempDir tmp;
  write_synthetic_video(tmp / "corpus" / "still", static_scene(), noisy(2));
  const auto log = tmp / "log.txt";
  const std::string manifest = "'" + (tmp / "corpus" / "still" / "manifest.json").string() + "'";

  EXPECT_EQ(cli("refine --manifest " + manifest + " --out '" + (tmp / "refined").string() + "'", log), 0) << slurp(log);
  EXPECT_NE(slurp(log).find("proposal mIoU"), std::string::npos) << slurp(log);
  EXPECT_TRUE(fs::exists(tmp / "refined" / "keyframe_proposals.json"));

  EXPECT_EQ(cli("run --corpus '" + (tmp / "corpus").string() + "' --out '" + (tmp / "pred").string() + "'", log), 0);
  EXPECT_EQ(cli("eval --corpus '" + (tmp / "corpus").string() + "' --predictions '" + (tmp / "pred").string() +
                    "' --out '" + (tmp / "ev").string() + "'",
                log),
            0)
      << slurp(log);
  EXPECT_EQ(json::parse(slurp(tmp / "ev" / "report.json")), json::parse(slurp(tmp / "pred" / "report.json")));

  EXPECT_EQ(cli("graph dump --manifest " + manifest + " --keyframe 3 --out '" + (tmp / "g.dot").string() + "'", log), 0)
      << slurp(log);
  EXPECT_EQ(slurp(tmp / "g.dot").rfind("graph ", 0), 0u) << slurp(tmp / "g.dot");
  EXPECT_EQ(cli("graph dump --manifest " + manifest + " --keyframe 9", log), 3) << slurp(log);
}

TEST(Cli, SynthGenerateCorpus) {
  TempDir tmp;
  const json spec{{"noise", {{"hole_rate", 0.5}}},
                  {"videos", {to_json(static_scene()), [] {
                                auto j = to_json(moving_scene());
                                j["noise_seed"] = 11;
                                return j;
                              }()}}};
  std::ofstream(tmp / "spec.json") << spec.dump();
  const auto log = tmp / "log.txt";
  EXPECT_EQ(cli("synth generate --spec '" + (tmp / "spec.json").string() + "' --out '" + (tmp / "c").string() + "'", log), 0)
      << slurp(log);
  EXPECT_EQ(list_corpus(tmp / "c").size(), 2u);
  EXPECT_EQ(cli("synth generate --spec '" + (tmp / "spec.json").string() + "' --out '" + (tmp / "d").string() + "'", log), 0);
  EXPECT_EQ(slurp(tmp / "c" / "moving" / "manifest.json"), slurp(tmp / "d" / "moving" / "manifest.json"));
  EXPECT_EQ(slurp(tmp / "c" / "moving" / "proposals" / "00002_000.png"),
            slurp(tmp / "d" / "moving" / "proposals" / "00002_000.png"));
}
