#pragma once

// File formats.
//
// Mask (row-major RLE): {"size": [h, w], "counts": [bg, fg, bg, ...]}. The
// counts may also be given in the compact COCO string encoding. Column-major
// (COCO image order) runs are not accepted.
//
// Input manifest:
//   {"video_id": str, "grid": {"h": int, "w": int}, "frames": [path, ...],
//    "detections": [{"frame": int, "prob_png": path | "rle": Mask,
//                    "objectness": float}, ...],
//    "ground_truth": [path, ...]   (optional, indexed label PNGs)}
// Relative paths resolve against the manifest's directory.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcmpg/config.hpp"
#include "mcmpg/error.hpp"
#include "mcmpg/evaluation.hpp"
#include "mcmpg/mask.hpp"
#include "mcmpg/mp_graph.hpp"
#include "mcmpg/png_io.hpp"
#include "mcmpg/propagation.hpp"
#include "mcmpg/synth.hpp"
#include "mcmpg/track.hpp"

namespace mcmpg {

using nlohmann::json;

/// Writes through a sibling temporary file and renames it into place.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline json mask_to_json(const Mask& m) {
  return {{"size", {m.shape().height, m.shape().width}}, {"counts", m.runs()}};
}

inline Mask mask_from_json(const json& j) {
  try {
    const auto size = j.at("size");
    if (!size.is_array() || size.size() != 2) throw InputError("mask size must be [h, w]");
    const GridShape shape{size[0].get<int>(), size[1].get<int>()};
    if (!shape.valid()) throw InputError("mask size must be positive");
    const auto& counts = j.at("counts");
    std::vector<Mask::Run> runs;
    if (counts.is_string()) {
      runs = decode_counts_string(counts.get<std::string>());
    } else {
      for (const auto& c : counts) {
        const auto v = c.get<long long>();
        if (v < 0) throw InputError("mask counts must be non-negative");
        runs.push_back(static_cast<Mask::Run>(v));
      }
    }
    return Mask::from_runs(shape, runs);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed mask: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("malformed mask: ") + e.what());
  }
}

/// Everything the pipeline needs about one video.
struct VideoInput {
  VideoContext video;
  std::vector<std::vector<Proposal>> detections;  ///< per frame
  std::optional<GroundTruth> gt;
};

/// Structural checks on a manifest document; returns human-readable problems.
inline std::vector<std::string> validate_manifest(const json& j) {
  std::vector<std::string> problems;
  if (!j.is_object()) return {"manifest must be a JSON object"};
  if (!j.contains("video_id") || !j["video_id"].is_string()) problems.push_back("video_id: missing or not a string");
  int frames = -1;
  if (!j.contains("grid") || !j["grid"].is_object() || !j["grid"].contains("h") ||
      !j["grid"].contains("w") || !j["grid"]["h"].is_number_integer() ||
      !j["grid"]["w"].is_number_integer() || j["grid"]["h"].get<int>() < 1 ||
      j["grid"]["w"].get<int>() < 1) {
    problems.push_back("grid: expected {\"h\": int >= 1, \"w\": int >= 1}");
  }
  if (!j.contains("frames") || !j["frames"].is_array()) {
    problems.push_back("frames: missing or not an array");
  } else {
    frames = static_cast<int>(j["frames"].size());
    if (frames == 0) problems.push_back("frames: video needs at least one frame");
    for (const auto& f : j["frames"]) {
      if (!f.is_string()) {
        problems.push_back("frames: entries must be paths");
        break;
      }
    }
  }
  if (!j.contains("detections") || !j["detections"].is_array()) {
    problems.push_back("detections: missing or not an array");
  } else {
    std::size_t i = 0;
    for (const auto& d : j["detections"]) {
      const std::string where = "detections[" + std::to_string(i++) + "]";
      if (!d.is_object()) {
        problems.push_back(where + ": not an object");
        continue;
      }
      if (!d.contains("frame") || !d["frame"].is_number_integer()) {
        problems.push_back(where + ".frame: missing or not an integer");
      } else if (frames >= 0 && (d["frame"].get<int>() < 0 || d["frame"].get<int>() >= frames)) {
        problems.push_back(where + ".frame: out of range");
      }
      const bool png = d.contains("prob_png"), rle = d.contains("rle");
      if (png == rle) problems.push_back(where + ": exactly one of prob_png or rle is required");
      if (png && !d["prob_png"].is_string()) problems.push_back(where + ".prob_png: not a path");
      if (rle && (!d["rle"].is_object() || !d["rle"].contains("size") || !d["rle"].contains("counts"))) {
        problems.push_back(where + ".rle: expected {size, counts}");
      }
      if (!d.contains("objectness") || !d["objectness"].is_number() ||
          d["objectness"].get<double>() < 0.0 || d["objectness"].get<double>() > 1.0) {
        problems.push_back(where + ".objectness: missing or outside [0,1]");
      }
    }
  }
  if (j.contains("ground_truth")) {
    if (!j["ground_truth"].is_array()) {
      problems.push_back("ground_truth: not an array");
    } else if (frames >= 0 && static_cast<int>(j["ground_truth"].size()) != frames) {
      problems.push_back("ground_truth: one label map per frame required");
    }
  }
  return problems;
}

inline VideoInput load_manifest(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  const auto problems = validate_manifest(j);
  if (!problems.empty()) {
    std::string msg = path.string() + ": invalid manifest";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InputError(msg);
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp = p;
    return (fp.is_relative() ? base / fp : fp).string();
  };
  VideoInput in;
  in.video.video_id = j["video_id"].get<std::string>();
  in.video.grid = GridShape{j["grid"]["h"].get<int>(), j["grid"]["w"].get<int>()};
  for (const auto& f : j["frames"]) in.video.frame_paths.push_back(resolve(f.get<std::string>()));
  in.video.frame_count = static_cast<int>(in.video.frame_paths.size());
  in.detections.resize(static_cast<std::size_t>(in.video.frame_count));
  for (const auto& d : j["detections"]) {
    Proposal p;
    p.source_frame = d["frame"].get<int>();
    p.objectness = d["objectness"].get<double>();
    if (d.contains("prob_png")) {
      p.prob = read_prob_png(resolve(d["prob_png"].get<std::string>()));
    } else {
      p.prob = ProbMask::from_mask(mask_from_json(d["rle"]));
    }
    if (!(p.prob.shape() == in.video.grid)) {
      throw InputError(path.string() + ": detection on frame " + std::to_string(p.source_frame) +
                       " is " + to_string(p.prob.shape()) + ", grid is " + to_string(in.video.grid));
    }
    auto& frame = in.detections[static_cast<std::size_t>(p.source_frame)];
    p.id = ProposalId{p.source_frame, static_cast<int>(frame.size())};
    frame.push_back(std::move(p));
  }
  if (j.contains("ground_truth")) {
    std::vector<std::vector<std::uint8_t>> labels;
    for (const auto& g : j["ground_truth"]) {
      Image8 img = read_label_png(resolve(g.get<std::string>()));
      if (!(img.shape == in.video.grid)) throw InputError("ground truth does not match grid");
      labels.push_back(std::move(img.pixels));
    }
    in.gt = GroundTruth::from_labels(in.video.grid, std::move(labels));
  }
  return in;
}

// --- sequences.json ---------------------------------------------------------

inline json sequences_to_json(const std::string& video_id, const GridShape& grid, int frame_count,
                              const SequenceSet& seqs) {
  json tracks = json::array();
  for (const auto& t : seqs.tracks) {
    json masks = json::array();
    for (const auto& m : t.masks) masks.push_back(mask_to_json(m));
    tracks.push_back({{"track_id", t.track_id},
                      {"key_frame", t.key_frame},
                      {"score", t.score},
                      {"masks", std::move(masks)}});
  }
  return {{"video_id", video_id},
          {"grid", {{"h", grid.height}, {"w", grid.width}}},
          {"frame_count", frame_count},
          {"tracks", std::move(tracks)}};
}

inline SequenceSet sequences_from_json(const json& j) {
  SequenceSet s;
  try {
    for (const auto& t : j.at("tracks")) {
      Track tr;
      tr.track_id = t.at("track_id").get<int>();
      tr.key_frame = t.at("key_frame").get<int>();
      tr.score = t.at("score").get<double>();
      for (const auto& m : t.at("masks")) tr.masks.push_back(mask_from_json(m));
      s.tracks.push_back(std::move(tr));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed sequences file: ") + e.what());
  }
  return s;
}

inline json keyframe_proposals_to_json(const std::string& video_id,
                                       const std::vector<FrameId>& keyframes,
                                       const std::vector<KeyFrameProposal>& proposals) {
  json arr = json::array();
  for (const auto& p : proposals) {
    json sources = json::array();
    for (const auto& s : p.sources) sources.push_back(to_string(s));
    arr.push_back({{"key_frame", p.key_frame},
                   {"area", p.mask.area()},
                   {"sources", std::move(sources)},
                   {"mask", mask_to_json(p.mask)}});
  }
  return {{"video_id", video_id}, {"keyframes", keyframes}, {"proposals", std::move(arr)}};
}

/// Key frames and masks only; votes and cliques are not persisted.
inline std::pair<std::vector<FrameId>, std::vector<KeyFrameProposal>> keyframe_proposals_from_json(
    const json& j) {
  std::pair<std::vector<FrameId>, std::vector<KeyFrameProposal>> out;
  try {
    out.first = j.at("keyframes").get<std::vector<FrameId>>();
    for (const auto& p : j.at("proposals")) {
      KeyFrameProposal kp;
      kp.key_frame = p.at("key_frame").get<int>();
      kp.mask = mask_from_json(p.at("mask"));
      out.second.push_back(std::move(kp));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed key frame proposals file: ") + e.what());
  }
  return out;
}

// --- reports ----------------------------------------------------------------

inline json report_to_json(const MetricReport& r) {
  auto object_json = [](const ObjectMetrics& o) {
    return json{{"object", o.object},   {"track_id", o.track_id}, {"J", o.j},
                {"F", o.f},             {"JF", o.jf()},           {"J_recall", o.j_recall},
                {"J_decay", o.j_decay}, {"F_recall", o.f_recall}, {"F_decay", o.f_decay}};
  };
  json videos = json::array();
  for (const auto& v : r.videos) {
    json objs = json::array();
    for (const auto& o : v.objects) objs.push_back(object_json(o));
    json entry{{"video_id", v.video_id},
               {"J", v.mean_j()},
               {"F", v.mean_f()},
               {"JF", v.mean_jf()},
               {"objects", std::move(objs)}};
    entry["proposal_miou"] = v.proposals ? json(v.proposals->miou()) : json(nullptr);
    videos.push_back(std::move(entry));
  }
  json mean{{"J", r.mean_j()},
            {"F", r.mean_f()},
            {"JF", r.mean_jf()},
            {"J_recall", r.object_mean([](const ObjectMetrics& o) { return o.j_recall; })},
            {"J_decay", r.object_mean([](const ObjectMetrics& o) { return o.j_decay; })},
            {"F_recall", r.object_mean([](const ObjectMetrics& o) { return o.f_recall; })},
            {"F_decay", r.object_mean([](const ObjectMetrics& o) { return o.f_decay; })}};
  const auto miou = r.proposal_miou();
  mean["proposal_miou"] = miou ? json(*miou) : json(nullptr);
  return {{"videos", std::move(videos)},
          {"mean", std::move(mean)},
          {"failures", r.failures},
          {"failed_videos", r.failed_videos}};
}

inline std::string report_to_csv(const MetricReport& r) {
  std::ostringstream os;
  char buf[512];
  os << "video_id,J,F,JF,J_recall,J_decay,F_recall,F_decay,proposal_miou\n";
  auto row = [&](const std::string& id, double j, double f, double jr, double jd, double fr,
                 double fd, std::optional<double> miou) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,", id.c_str(), j, f,
                  0.5 * (j + f), jr, jd, fr, fd);
    os << buf;
    if (miou) {
      std::snprintf(buf, sizeof buf, "%.6f", *miou);
      os << buf;
    }
    os << "\n";
  };
  for (const auto& v : r.videos) {
    row(v.video_id, v.mean_j(), v.mean_f(),
        v.mean_of([](const ObjectMetrics& o) { return o.j_recall; }),
        v.mean_of([](const ObjectMetrics& o) { return o.j_decay; }),
        v.mean_of([](const ObjectMetrics& o) { return o.f_recall; }),
        v.mean_of([](const ObjectMetrics& o) { return o.f_decay; }),
        v.proposals ? std::optional<double>(v.proposals->miou()) : std::nullopt);
  }
  row("mean", r.mean_j(), r.mean_f(), r.object_mean([](const ObjectMetrics& o) { return o.j_recall; }),
      r.object_mean([](const ObjectMetrics& o) { return o.j_decay; }),
      r.object_mean([](const ObjectMetrics& o) { return o.f_recall; }),
      r.object_mean([](const ObjectMetrics& o) { return o.f_decay; }), r.proposal_miou());
  return os.str();
}

/// Per-frame J curves of every object of one video as a standalone SVG.
inline std::string j_curves_svg(const VideoReport& v) {
  const int width = 640, height = 240, pad = 30;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n";
  os << "<text x=\"" << pad << "\" y=\"18\" font-size=\"12\">" << v.video_id
     << " per-frame J</text>\n";
  os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << width - 2 * pad
     << "\" height=\"" << height - 2 * pad << "\" fill=\"none\" stroke=\"#888\"/>\n";
  static const char* colors[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4"};
  char buf[64];
  for (std::size_t k = 0; k < v.objects.size(); ++k) {
    const auto& series = v.objects[k].j_per_frame;
    if (series.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" points=\"";
    const double dx = series.size() > 1 ? (width - 2.0 * pad) / static_cast<double>(series.size() - 1) : 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", pad + dx * static_cast<double>(t),
                    pad + (1.0 - series[t]) * (height - 2.0 * pad));
      os << buf;
    }
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// --- synthetic scene / noise specs -----------------------------------------

inline SceneSpec scene_from_json(const json& j) {
  try {
    SceneSpec s;
    s.video_id = j.value("video_id", s.video_id);
    s.grid = GridShape{j.at("grid").at("h").get<int>(), j.at("grid").at("w").get<int>()};
    s.frame_count = j.at("frames").get<int>();
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& o : j.at("objects")) {
      ObjectSpec obj;
      obj.shape = parse_shape_kind(o.at("shape").get<std::string>());
      const auto& p = o.at("pose");
      obj.pose = Pose{p.at("cx").get<double>(), p.at("cy").get<double>(), p.at("width").get<double>(),
                      p.at("height").get<double>(), p.value("angle_deg", 0.0)};
      if (o.contains("motion")) {
        const auto& m = o["motion"];
        if (m.is_array()) {
          for (const auto& e : m) obj.motion.push_back(motion_from_json(e));
        } else {
          obj.motion.push_back(motion_from_json(m));
        }
      }
      s.objects.push_back(std::move(obj));
    }
    return s;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed scene spec: ") + e.what());
  }
}

inline json to_json(const SceneSpec& s) {
  json objects = json::array();
  for (const auto& o : s.objects) {
    json motion = json::array();
    for (const auto& m : o.motion) motion.push_back(to_json(m));
    objects.push_back({{"shape", to_string(o.shape)},
                       {"pose",
                        {{"cx", o.pose.cx},
                         {"cy", o.pose.cy},
                         {"width", o.pose.width},
                         {"height", o.pose.height},
                         {"angle_deg", o.pose.angle_deg}}},
                       {"motion", std::move(motion)}});
  }
  return {{"video_id", s.video_id},
          {"grid", {{"h", s.grid.height}, {"w", s.grid.width}}},
          {"frames", s.frame_count},
          {"seed", s.seed},
          {"objects", std::move(objects)}};
}

inline NoiseSpec noise_from_json(const json& j) {
  try {
    NoiseSpec n;
    n.hole_rate = j.value("hole_rate", 0.0);
    n.boundary_jitter_radius = j.value("boundary_jitter_radius", 0);
    n.split_prob = j.value("split_prob", 0.0);
    n.false_positive_rate = j.value("false_positive_rate", 0.0);
    n.miss_rate = j.value("miss_rate", 0.0);
    n.objectness_noise_sigma = j.value("objectness_noise_sigma", 0.0);
    n.seed = j.value("seed", std::uint64_t{0});
    n.validate();
    return n;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed noise spec: ") + e.what());
  }
}

inline json to_json(const NoiseSpec& n) {
  return {{"hole_rate", n.hole_rate},
          {"boundary_jitter_radius", n.boundary_jitter_radius},
          {"split_prob", n.split_prob},
          {"false_positive_rate", n.false_positive_rate},
          {"miss_rate", n.miss_rate},
          {"objectness_noise_sigma", n.objectness_noise_sigma},
          {"seed", n.seed}};
}

inline std::string frame_name(int f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d.png", f);
  return buf;
}

/// Materializes a synthetic video on disk: frames/, gt/, proposals/ and
/// manifest.json (which lists the ground truth).
inline void write_synthetic_video(const std::filesystem::path& dir, const SceneSpec& scene,
                                  const NoiseSpec& noise) {
  namespace fs = std::filesystem;
  const RenderedScene rendered = render_scene(scene);
  const auto detections = corrupt(rendered.gt, noise);
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "proposals");
  json frames = json::array(), gt = json::array(), dets = json::array();
  for (int f = 0; f < scene.frame_count; ++f) {
    const auto name = frame_name(f);
    write_gray_png(dir / "frames" / name, scene.grid, rendered.frames[static_cast<std::size_t>(f)]);
    write_label_png(dir / "gt" / name, scene.grid, rendered.gt.labels[static_cast<std::size_t>(f)]);
    frames.push_back("frames/" + name);
    gt.push_back("gt/" + name);
    for (const auto& p : detections[static_cast<std::size_t>(f)]) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%05d_%03d.png", f, p.id.index);
      write_prob_png(dir / "proposals" / buf, p.prob);
      dets.push_back({{"frame", f}, {"prob_png", std::string("proposals/") + buf}, {"objectness", p.objectness}});
    }
  }
  json manifest{{"video_id", scene.video_id},
                {"grid", {{"h", scene.grid.height}, {"w", scene.grid.width}}},
                {"frames", std::move(frames)},
                {"detections", std::move(dets)},
                {"ground_truth", std::move(gt)}};
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct SyntheticVideoSpec {
  SceneSpec scene;
  NoiseSpec noise;
};

/// Expands a generator spec. {"videos": [scene, ...], "noise": {...}} is a
/// corpus where each scene may carry its own "noise_seed"; anything else is a
/// single scene. `seed` replaces the noise seeds: derive_seed({seed, index})
/// per corpus video, the seed itself for a single scene.
inline std::vector<SyntheticVideoSpec> synthetic_specs(const json& spec, std::optional<NoiseSpec> noise = std::nullopt,
                                                       std::optional<std::uint64_t> seed = std::nullopt) {
  if (!noise) noise = spec.contains("noise") ? noise_from_json(spec["noise"]) : NoiseSpec{};
  std::vector<SyntheticVideoSpec> out;
  if (!spec.contains("videos")) {
    out.push_back({scene_from_json(spec), *noise});
    if (seed) out.back().noise.seed = *seed;
    return out;
  }
  std::uint64_t index = 0;
  for (const auto& v : spec["videos"]) {
    SyntheticVideoSpec s{scene_from_json(v), *noise};
    if (v.contains("noise_seed")) s.noise.seed = v["noise_seed"].get<std::uint64_t>();
    if (seed) s.noise.seed = derive_seed({*seed, index});
    ++index;
    out.push_back(std::move(s));
  }
  return out;
}

/// In-memory equivalent of write_synthetic_video followed by load_manifest.
inline VideoInput synthetic_video_input(const SceneSpec& scene, const NoiseSpec& noise) {
  RenderedScene rendered = render_scene(scene);
  VideoInput in;
  in.video.video_id = scene.video_id;
  in.video.grid = scene.grid;
  in.video.frame_count = scene.frame_count;
  in.detections = corrupt(rendered.gt, noise);
  in.gt = std::move(rendered.gt);
  return in;
}

}  // namespace mcmpg
