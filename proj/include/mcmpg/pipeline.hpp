#pragma once

// Two-stage orchestration. Stage 1 refines proposals on each key frame from
// its clip; stage 2 tracks every refined proposal through the video, scores
// the resulting sequences against the raw detections and de-duplicates them.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mcmpg/config.hpp"
#include "mcmpg/evaluation.hpp"
#include "mcmpg/io.hpp"
#include "mcmpg/keyframe.hpp"
#include "mcmpg/mp_graph.hpp"
#include "mcmpg/parallel.hpp"
#include "mcmpg/png_io.hpp"
#include "mcmpg/propagation.hpp"
#include "mcmpg/sequence.hpp"

namespace mcmpg {

struct StageOneResult {
  std::vector<FrameId> keyframes;
  std::vector<KeyFrameProposal> proposals;  ///< key frame order, then clique order
  std::vector<std::string> errors;          ///< one entry per failed key frame
};

struct VideoResult {
  StageOneResult stage_one;
  SequenceSet candidates;  ///< every tracked proposal, scored
  SequenceSet tracks;      ///< survivors of sequence NMS, rank order
  LabelMaps labels;
  std::vector<std::string> errors;

  bool partial_failure() const { return !errors.empty(); }
};

/// Raw key frame detections binarized at 0.5, used when the graph is
/// disabled.
inline std::vector<KeyFrameProposal> raw_keyframe_proposals(FrameId g,
                                                            std::span<const Proposal> detections,
                                                            std::size_t min_area) {
  std::vector<KeyFrameProposal> out;
  for (const auto& d : detections) {
    KeyFrameProposal p;
    p.mask = binarize(d.prob, 0.5);
    if (p.mask.area() < min_area) continue;
    if (std::any_of(out.begin(), out.end(), [&](const KeyFrameProposal& o) { return o.mask == p.mask; })) {
      continue;
    }
    p.vote = d.prob;
    p.key_frame = g;
    p.sources = {d.id};
    out.push_back(std::move(p));
  }
  return out;
}

inline StageOneResult run_stage_one(const PipelineConfig& cfg, const VideoInput& in,
                                    Propagator& propagator, int workers = 1) {
  StageOneResult r;
  r.keyframes = select_keyframes(in.video.frame_count, cfg.keyframes);
  if (static_cast<int>(r.keyframes.size()) < cfg.keyframes) {
    std::cerr << "warning: " << in.video.video_id << ": " << cfg.keyframes
              << " key frames requested, video of " << in.video.frame_count << " frames yields "
              << r.keyframes.size() << "\n";
  }
  std::vector<std::vector<KeyFrameProposal>> per_key(r.keyframes.size());
  std::vector<std::string> errors(r.keyframes.size());
  parallel_for(r.keyframes.size(), workers, [&](std::size_t k) {
    const FrameId g = r.keyframes[k];
    try {
      if (cfg.use_mpgraph) {
        const KeyFrameClip clip = build_clip(g, cfg.clip_size, in.video.frame_count);
        per_key[k] = refine_keyframe(clip, in.detections, propagator, in.video, cfg.refine_params());
      } else {
        per_key[k] = raw_keyframe_proposals(g, in.detections[static_cast<std::size_t>(g)], cfg.min_area);
      }
    } catch (const std::exception& e) {
      errors[k] = in.video.video_id + ": key frame " + std::to_string(g) + ": " + e.what();
    }
  });
  for (std::size_t k = 0; k < per_key.size(); ++k) {
    if (!errors[k].empty()) r.errors.push_back(errors[k]);
    for (auto& p : per_key[k]) r.proposals.push_back(std::move(p));
  }
  return r;
}

inline VideoResult run_video(const PipelineConfig& cfg, const VideoInput& in, Propagator& propagator,
                             int workers = 1) {
  VideoResult r;
  r.stage_one = run_stage_one(cfg, in, propagator, workers);
  r.errors = r.stage_one.errors;

  const auto& props = r.stage_one.proposals;
  std::vector<TrackAttempt> attempts(props.size());
  parallel_for(props.size(), workers, [&](std::size_t i) {
    try {
      attempts[i].track =
          track_one(propagator, in.video, props[i].key_frame, props[i].mask, static_cast<int>(i));
    } catch (const std::exception& e) {
      attempts[i].error = in.video.video_id + ": track " + std::to_string(i) + " from key frame " +
                          std::to_string(props[i].key_frame) + ": " + e.what();
    }
  });

  const FrameDetections detections = binarize_detections(in.detections);
  for (auto& a : attempts) {
    if (!a.track) {
      r.errors.push_back(a.error);
      continue;
    }
    a.track->score = sequence_score(*a.track, detections);
    r.candidates.tracks.push_back(std::move(*a.track));
  }
  r.tracks = sequence_nms(r.candidates, cfg.nms_threshold);
  r.labels = render_labels(r.tracks, in.video.grid, in.video.frame_count, cfg.top_m);
  return r;
}

inline int boundary_tolerance_for(const PipelineConfig& cfg, const GridShape& grid) {
  return cfg.boundary_tolerance.value_or(default_boundary_tolerance(grid));
}

inline VideoReport evaluate_result(const PipelineConfig& cfg, const VideoInput& in,
                                   const VideoResult& r) {
  if (!in.gt) throw InputError(in.video.video_id + ": no ground truth to evaluate against");
  VideoReport rep = evaluate_video(in.video.video_id, r.tracks, *in.gt,
                                   boundary_tolerance_for(cfg, in.video.grid));
  rep.proposals = proposal_quality(r.stage_one.proposals, *in.gt, r.stage_one.keyframes);
  return rep;
}

/// Label PNGs (labels/00000.png ...), sequences.json and keyframe_proposals.json.
inline void write_video_outputs(const std::filesystem::path& dir, const VideoInput& in,
                                const VideoResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "labels");
  for (std::size_t f = 0; f < r.labels.frames.size(); ++f) {
    write_label_png(dir / "labels" / frame_name(static_cast<int>(f)), r.labels.shape, r.labels.frames[f]);
  }
  write_text_atomic(dir / "sequences.json",
                    sequences_to_json(in.video.video_id, in.video.grid, in.video.frame_count, r.tracks)
                            .dump(1) + "\n");
  write_text_atomic(dir / "keyframe_proposals.json",
                    keyframe_proposals_to_json(in.video.video_id, r.stage_one.keyframes,
                                               r.stage_one.proposals)
                            .dump(1) + "\n");
}

/// Sorted subdirectories of `corpus_dir` that hold a manifest.json.
inline std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& corpus_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(corpus_dir)) throw InputError("corpus " + corpus_dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(corpus_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct CorpusOptions {
  bool svg = false;  ///< also dump per-video J curves
};

/// Runs and evaluates every video of a corpus. Videos are processed in
/// parallel; each writes into its own output directory and the report is
/// assembled in corpus order. Writes report.json and report.csv.
inline MetricReport run_corpus(const PipelineConfig& cfg, const std::filesystem::path& corpus_dir,
                               const std::filesystem::path& out_dir, const CorpusOptions& opts = {}) {
  const auto videos = list_corpus(corpus_dir);
  if (videos.empty()) throw InputError("corpus " + corpus_dir.string() + ": nothing to evaluate");
  auto propagator = make_propagator(cfg.effective_propagator());

  struct Slot {
    std::optional<VideoReport> report;
    std::string error;
  };
  std::vector<Slot> slots(videos.size());
  parallel_for(videos.size(), cfg.workers, [&](std::size_t i) {
    try {
      VideoInput in = load_manifest(videos[i] / "manifest.json");
      in.video.scratch_dir = out_dir / ".scratch" / in.video.video_id;
      const VideoResult r = run_video(cfg, in, *propagator, 1);
      write_video_outputs(out_dir / in.video.video_id, in, r);
      if (r.partial_failure()) {
        std::string msg;
        for (const auto& e : r.errors) msg += (msg.empty() ? "" : "; ") + e;
        throw std::runtime_error(msg);
      }
      slots[i].report = evaluate_result(cfg, in, r);
      if (opts.svg) {
        write_text_atomic(out_dir / in.video.video_id / "j_curves.svg", j_curves_svg(*slots[i].report));
      }
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  });

  MetricReport report;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].report) {
      report.videos.push_back(std::move(*slots[i].report));
    } else {
      ++report.failures;
      report.failed_videos.push_back(videos[i].filename().string());
      std::cerr << "error: " << videos[i].filename().string() << ": " << slots[i].error << "\n";
    }
  }
  std::error_code ec;
  std::filesystem::remove_all(out_dir / ".scratch", ec);
  write_text_atomic(out_dir / "report.json", report_to_json(report).dump(1) + "\n");
  write_text_atomic(out_dir / "report.csv", report_to_csv(report));
  return report;
}

}  // namespace mcmpg
