#pragma once

// Pipeline configuration: one JSON document, every key optional.
//
//   {
//     "keyframes": 2, "clip_size": 3, "t0": 0.5, "t1": 0.2, "min_area": 10,
//     "nms_threshold": 0.5, "vote_divisor": "H" | "n", "top_m": null,
//     "seed": 0, "workers": 1, "use_mpgraph": true, "boundary_tolerance": null,
//     "propagator": {"kind": "identity" | "affine" | "noisy" | "plugin",
//                    "motion_table": "motion.json" | [ {dx,dy,scale,rotation_deg} ],
//                    "seed": 0, "strength": 0.5, "command": "...", "processes": 1}
//   }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"
#include "mcmpg/error.hpp"
#include "mcmpg/mp_graph.hpp"
#include "mcmpg/propagation.hpp"

namespace mcmpg {

struct PipelineConfig {
  int keyframes = 2;
  int clip_size = 3;
  double t0 = 0.5;
  double t1 = 0.2;
  std::size_t min_area = 10;
  double nms_threshold = 0.5;
  VoteDivisor vote_divisor = VoteDivisor::clip_size;
  PropagatorSpec propagator;
  std::optional<std::uint64_t> propagator_seed;  ///< falls back to `seed`
  std::optional<int> top_m;
  std::uint64_t seed = 0;
  int workers = 1;
  bool use_mpgraph = true;
  std::optional<int> boundary_tolerance;  ///< default: 0.8% of the diagonal

  void validate() const {
    auto ratio = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
    };
    ratio(t0, "t0");
    ratio(t1, "t1");
    ratio(nms_threshold, "nms_threshold");
    if (keyframes < 1) throw ConfigError("keyframes must be >= 1");
    if (clip_size < 1 || clip_size % 2 == 0) throw ConfigError("clip_size must be odd and >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (top_m && *top_m < 0) throw ConfigError("top_m must be >= 0");
    if (boundary_tolerance && *boundary_tolerance < 0) throw ConfigError("boundary_tolerance must be >= 0");
    if (propagator.kind == PropagatorSpec::Kind::plugin && propagator.command.empty()) {
      throw ConfigError("plugin propagator requires a command");
    }
    if (propagator.processes < 1) throw ConfigError("propagator.processes must be >= 1");
    if (!(propagator.strength >= 0.0 && propagator.strength <= 1.0)) {
      throw ConfigError("propagator.strength must lie in [0,1]");
    }
  }

  PropagatorSpec effective_propagator() const {
    PropagatorSpec s = propagator;
    s.seed = propagator_seed.value_or(seed);
    return s;
  }

  RefineParams refine_params() const {
    return RefineParams{t0, VoteParams{clip_size, t1, min_area, vote_divisor}};
  }
};

inline Motion motion_from_json(const nlohmann::json& j) {
  Motion m;
  m.dx = j.value("dx", 0.0);
  m.dy = j.value("dy", 0.0);
  m.scale = j.value("scale", 1.0);
  m.rotation_deg = j.value("rotation_deg", 0.0);
  return m;
}

inline nlohmann::json to_json(const Motion& m) {
  return {{"dx", m.dx}, {"dy", m.dy}, {"scale", m.scale}, {"rotation_deg", m.rotation_deg}};
}

inline MotionTable load_motion_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open motion table " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("motion table " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw ConfigError("motion table must be a JSON array");
  MotionTable t;
  for (const auto& e : j) t.push_back(motion_from_json(e));
  return t;
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

/// Relative motion table paths resolve against `base_dir`.
inline PipelineConfig config_from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"keyframes", "clip_size", "t0", "t1", "min_area", "nms_threshold",
                               "vote_divisor", "propagator", "top_m", "seed", "workers",
                               "use_mpgraph", "boundary_tolerance"},
                              "config");
  PipelineConfig c;
  try {
    c.keyframes = j.value("keyframes", c.keyframes);
    c.clip_size = j.value("clip_size", c.clip_size);
    c.t0 = j.value("t0", c.t0);
    c.t1 = j.value("t1", c.t1);
    c.min_area = j.value("min_area", c.min_area);
    c.nms_threshold = j.value("nms_threshold", c.nms_threshold);
    if (j.contains("vote_divisor")) {
      const auto d = j["vote_divisor"].get<std::string>();
      if (d == "H") {
        c.vote_divisor = VoteDivisor::clip_size;
      } else if (d == "n") {
        c.vote_divisor = VoteDivisor::members;
      } else {
        throw ConfigError("vote_divisor must be \"H\" or \"n\"");
      }
    }
    if (j.contains("top_m") && !j["top_m"].is_null()) c.top_m = j["top_m"].get<int>();
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.use_mpgraph = j.value("use_mpgraph", c.use_mpgraph);
    if (j.contains("boundary_tolerance") && !j["boundary_tolerance"].is_null()) {
      c.boundary_tolerance = j["boundary_tolerance"].get<int>();
    }
    if (j.contains("propagator")) {
      const auto& p = j["propagator"];
      if (!p.is_object()) throw ConfigError("propagator must be an object");
      detail::reject_unknown_keys(p, {"kind", "motion_table", "seed", "strength", "command", "processes"},
                                  "propagator");
      c.propagator.kind = parse_propagator_kind(p.value("kind", std::string("identity")));
      if (p.contains("motion_table")) {
        const auto& mt = p["motion_table"];
        if (mt.is_string()) {
          std::filesystem::path path = mt.get<std::string>();
          if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
          c.propagator.motion = load_motion_table(path);
        } else if (mt.is_array()) {
          for (const auto& e : mt) c.propagator.motion.push_back(motion_from_json(e));
        } else {
          throw ConfigError("propagator.motion_table must be a path or an array");
        }
      }
      if (p.contains("seed")) c.propagator_seed = p["seed"].get<std::uint64_t>();
      c.propagator.strength = p.value("strength", c.propagator.strength);
      c.propagator.command = p.value("command", c.propagator.command);
      c.propagator.processes = p.value("processes", c.propagator.processes);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

}  // namespace mcmpg
