// mcmpg: command-line front end.
//
//   mcmpg run     --corpus DIR --out DIR [--svg]      run + evaluate a corpus
//   mcmpg run     --manifest FILE --out DIR           one video, no evaluation
//   mcmpg refine  --manifest FILE --out DIR           key frame proposals only
//   mcmpg eval    --corpus DIR --predictions DIR --out DIR
//   mcmpg synth generate --spec scene.json [--noise noise.json] --out DIR
//   mcmpg graph dump --manifest FILE --keyframe G [--out FILE.dot]
//
// Exit codes: 0 ok, 2 config error, 3 input error, 4 some videos failed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mcmpg/mcmpg.hpp"

namespace fs = std::filesystem;
using namespace mcmpg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInput = 3;
constexpr int kExitPartial = 4;

// Every config key has a flag; unset flags leave the config file value alone.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> keyframes;
  std::optional<int> clip_size;
  std::optional<double> t0;
  std::optional<double> t1;
  std::optional<std::size_t> min_area;
  std::optional<double> nms_threshold;
  std::optional<std::string> vote_divisor;
  std::optional<int> top_m;
  std::optional<int> boundary_tolerance;
  std::optional<std::string> propagator;
  std::optional<std::string> motion_table;
  std::optional<std::uint64_t> propagator_seed;
  std::optional<double> strength;
  std::optional<std::string> plugin_command;
  std::optional<int> plugin_processes;
  bool no_mpgraph = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--seed", seed, "global seed");
    app->add_option("--workers", workers, "worker threads");
    app->add_option("--keyframes", keyframes, "key frames per video (K)");
    app->add_option("--clip-size", clip_size, "key frame clip size (H, odd)");
    app->add_option("--t0", t0, "graph edge IoU threshold");
    app->add_option("--t1", t1, "vote threshold");
    app->add_option("--min-area", min_area, "smallest refined proposal in pixels");
    app->add_option("--nms-threshold", nms_threshold, "sequence NMS IoU threshold");
    app->add_option("--vote-divisor", vote_divisor, "H or n")->check(CLI::IsMember({"H", "n"}));
    app->add_option("--top-m", top_m, "keep at most this many tracks");
    app->add_option("--boundary-tolerance", boundary_tolerance, "F-measure tolerance in pixels");
    app->add_option("--propagator", propagator, "identity | affine | noisy | plugin");
    app->add_option("--motion-table", motion_table, "JSON motion table for the affine propagator");
    app->add_option("--propagator-seed", propagator_seed, "seed of the noisy propagator");
    app->add_option("--strength", strength, "noisy propagator strength in [0,1]");
    app->add_option("--plugin-command", plugin_command, "shell command of the plugin propagator");
    app->add_option("--plugin-processes", plugin_processes, "plugin process pool size");
    app->add_flag("--no-mpgraph", no_mpgraph, "use raw key frame detections (ablation)");
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (seed) c.seed = *seed;
    if (workers) c.workers = *workers;
    if (keyframes) c.keyframes = *keyframes;
    if (clip_size) c.clip_size = *clip_size;
    if (t0) c.t0 = *t0;
    if (t1) c.t1 = *t1;
    if (min_area) c.min_area = *min_area;
    if (nms_threshold) c.nms_threshold = *nms_threshold;
    if (vote_divisor) c.vote_divisor = *vote_divisor == "n" ? VoteDivisor::members : VoteDivisor::clip_size;
    if (top_m) c.top_m = *top_m;
    if (boundary_tolerance) c.boundary_tolerance = *boundary_tolerance;
    if (propagator) c.propagator.kind = parse_propagator_kind(*propagator);
    if (motion_table) c.propagator.motion = load_motion_table(*motion_table);
    if (propagator_seed) c.propagator_seed = *propagator_seed;
    if (strength) c.propagator.strength = *strength;
    if (plugin_command) c.propagator.command = *plugin_command;
    if (plugin_processes) c.propagator.processes = *plugin_processes;
    if (no_mpgraph) c.use_mpgraph = false;
    c.validate();
    return c;
  }
};

void print_summary(const MetricReport& r) {
  std::printf("videos %zu  failed %d  J %.4f  F %.4f  J&F %.4f", r.videos.size(), r.failures,
              r.mean_j(), r.mean_f(), r.mean_jf());
  if (const auto m = r.proposal_miou()) std::printf("  proposal mIoU %.4f", *m);
  std::printf("\n");
}

int report_errors(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "error: " << e << "\n";
  return errors.empty() ? 0 : kExitPartial;
}

VideoInput load_single(const std::string& manifest, const fs::path& out) {
  VideoInput in = load_manifest(manifest);
  in.video.scratch_dir = out / ".scratch";
  return in;
}

int cmd_run(const Overrides& o, const std::string& corpus, const std::string& manifest,
            const fs::path& out, bool svg) {
  const PipelineConfig cfg = o.resolve();
  if (!corpus.empty()) {
    const MetricReport r = run_corpus(cfg, corpus, out, CorpusOptions{svg});
    print_summary(r);
    return r.failures > 0 ? kExitPartial : 0;
  }
  VideoInput in = load_single(manifest, out);
  auto propagator = make_propagator(cfg.effective_propagator());
  const VideoResult r = run_video(cfg, in, *propagator, cfg.workers);
  write_video_outputs(out, in, r);
  fs::remove_all(out / ".scratch");
  std::printf("%s: %zu key frame proposals, %zu tracks\n", in.video.video_id.c_str(),
              r.stage_one.proposals.size(), r.tracks.size());
  return report_errors(r.errors);
}

int cmd_refine(const Overrides& o, const std::string& manifest, const fs::path& out) {
  const PipelineConfig cfg = o.resolve();
  VideoInput in = load_single(manifest, out);
  auto propagator = make_propagator(cfg.effective_propagator());
  const StageOneResult r = run_stage_one(cfg, in, *propagator, cfg.workers);
  write_text_atomic(out / "keyframe_proposals.json",
                    keyframe_proposals_to_json(in.video.video_id, r.keyframes, r.proposals).dump(1) + "\n");
  fs::remove_all(out / ".scratch");
  std::printf("%s: %zu key frame proposals on %zu key frames", in.video.video_id.c_str(),
              r.proposals.size(), r.keyframes.size());
  if (in.gt) std::printf(", proposal mIoU %.4f", proposal_miou(r.proposals, *in.gt, r.keyframes));
  std::printf("\n");
  return report_errors(r.errors);
}

int cmd_eval(const Overrides& o, const fs::path& corpus, const fs::path& predictions,
             const fs::path& out) {
  const PipelineConfig cfg = o.resolve();
  const auto videos = list_corpus(corpus);
  if (videos.empty()) throw InputError("corpus " + corpus.string() + ": nothing to evaluate");
  MetricReport report;
  for (const auto& dir : videos) {
    try {
      const VideoInput in = load_manifest(dir / "manifest.json");
      if (!in.gt) throw InputError("no ground truth");
      const fs::path pred_dir = predictions / in.video.video_id;
      const SequenceSet seqs = sequences_from_json(read_json_file(pred_dir / "sequences.json"));
      VideoReport v = evaluate_video(in.video.video_id, seqs, *in.gt, boundary_tolerance_for(cfg, in.video.grid));
      if (fs::exists(pred_dir / "keyframe_proposals.json")) {
        const auto [keys, props] = keyframe_proposals_from_json(read_json_file(pred_dir / "keyframe_proposals.json"));
        v.proposals = proposal_quality(props, *in.gt, keys);
      }
      report.videos.push_back(std::move(v));
    } catch (const std::exception& e) {
      ++report.failures;
      report.failed_videos.push_back(dir.filename().string());
      std::cerr << "error: " << dir.filename().string() << ": " << e.what() << "\n";
    }
  }
  write_text_atomic(out / "report.json", report_to_json(report).dump(1) + "\n");
  write_text_atomic(out / "report.csv", report_to_csv(report));
  print_summary(report);
  return report.failures > 0 ? kExitPartial : 0;
}

int cmd_synth(const std::string& spec_path, const std::string& noise_path, const fs::path& out,
              std::optional<std::uint64_t> seed) {
  const json spec = read_json_file(spec_path);
  std::optional<NoiseSpec> noise;
  if (!noise_path.empty()) noise = noise_from_json(read_json_file(noise_path));
  const auto videos = synthetic_specs(spec, noise, seed);
  if (!spec.contains("videos")) {
    write_synthetic_video(out, videos[0].scene, videos[0].noise);
    std::printf("wrote %s\n", out.string().c_str());
    return 0;
  }
  for (const auto& v : videos) write_synthetic_video(out / v.scene.video_id, v.scene, v.noise);
  std::printf("wrote %zu videos to %s\n", videos.size(), out.string().c_str());
  return 0;
}

int cmd_graph_dump(const Overrides& o, const std::string& manifest, int keyframe, const std::string& out) {
  const PipelineConfig cfg = o.resolve();
  VideoInput in = load_manifest(manifest);
  const fs::path scratch = fs::temp_directory_path() / ("mcmpg_graph_" + std::to_string(::getpid()));
  in.video.scratch_dir = scratch;
  auto propagator = make_propagator(cfg.effective_propagator());
  const KeyFrameClip clip = build_clip(keyframe, cfg.clip_size, in.video.frame_count);
  MPGraph graph;
  refine_keyframe(clip, in.detections, *propagator, in.video, cfg.refine_params(), &graph);
  fs::remove_all(scratch);
  const std::string dot = to_dot(graph, in.video.video_id + "_k" + std::to_string(keyframe));
  if (out.empty()) {
    std::cout << dot;
  } else {
    write_text_atomic(out, dot);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-frame proposal graph refinement for video object segmentation"};
  app.require_subcommand(1);

  Overrides run_o, refine_o, eval_o, graph_o;
  std::string corpus, manifest, out, predictions, spec, noise, dot_out;
  bool svg = false;
  int keyframe = 0;

  auto* run = app.add_subcommand("run", "two-stage pipeline on a corpus or a single manifest");
  run_o.attach(run);
  auto* run_src = run->add_option_group("source");
  run_src->add_option("--corpus", corpus, "corpus directory (one subdirectory per video)");
  run_src->add_option("--manifest", manifest, "single video manifest");
  run_src->require_option(1);
  run->add_option("--out", out, "output directory")->required();
  run->add_flag("--svg", svg, "write per-frame J curves");

  auto* refine = app.add_subcommand("refine", "key frame proposal generation only");
  refine_o.attach(refine);
  refine->add_option("--manifest", manifest, "video manifest")->required();
  refine->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate stored sequences against ground truth");
  eval_o.attach(eval);
  eval->add_option("--corpus", corpus, "corpus with ground truth")->required();
  eval->add_option("--predictions", predictions, "directory written by run")->required();
  eval->add_option("--out", out, "report directory")->required();

  auto* synth = app.add_subcommand("synth", "synthetic benchmark");
  synth->require_subcommand(1);
  auto* generate = synth->add_subcommand("generate", "render a scene or a corpus spec");
  generate->add_option("--spec", spec, "scene or corpus JSON")->required();
  generate->add_option("--noise", noise, "noise JSON");
  generate->add_option("--out", out, "output directory")->required();
  std::optional<std::uint64_t> synth_seed;
  int unused_workers = 1;
  std::string unused_config;
  generate->add_option("--seed", synth_seed, "replaces the noise seed(s) of the spec");
  generate->add_option("--workers", unused_workers, "accepted, generation is sequential");
  generate->add_option("--config", unused_config, "accepted, unused");

  auto* graph = app.add_subcommand("graph", "inspect the proposal graph");
  graph->require_subcommand(1);
  auto* dump = graph->add_subcommand("dump", "write the graph of one key frame as DOT");
  graph_o.attach(dump);
  dump->add_option("--manifest", manifest, "video manifest")->required();
  dump->add_option("--keyframe", keyframe, "key frame index")->required();
  dump->add_option("--out", dot_out, "DOT file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_o, corpus, manifest, out, svg);
    if (*refine) return cmd_refine(refine_o, manifest, out);
    if (*eval) return cmd_eval(eval_o, corpus, predictions, out);
    if (*generate) return cmd_synth(spec, noise, out, synth_seed);
    if (*dump) return cmd_graph_dump(graph_o, manifest, keyframe, dot_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
