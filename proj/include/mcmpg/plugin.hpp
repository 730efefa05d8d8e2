#pragma once

// External propagator bridge. Each child process speaks line-delimited JSON
// on stdin/stdout:
//   request : {"video_id", "frames": [paths source..target], "source_frame",
//              "target_frame", "mask_png", "prob_png"}
//   response: {"prob_png": path} or {"error": message}
// One request per line, one response per line, in order.

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcmpg/png_io.hpp"
#include "mcmpg/propagation.hpp"

extern char** environ;

namespace mcmpg {

namespace detail {

class PluginProcess {
 public:
  explicit PluginProcess(const std::string& command) {
    int to_child[2], from_child[2];
    if (pipe2(to_child, O_CLOEXEC) != 0) throw PropagationError("plugin: pipe failed");
    if (pipe2(from_child, O_CLOEXEC) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw PropagationError("plugin: pipe failed");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    std::string sh = "/bin/sh", dash_c = "-c", cmd = command;
    char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
    const int rc = posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    close(to_child[0]);
    close(from_child[1]);
    if (rc != 0) {
      close(to_child[1]);
      close(from_child[0]);
      throw PropagationError("plugin: cannot spawn '" + command + "'");
    }
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
  }

  PluginProcess(const PluginProcess&) = delete;
  PluginProcess& operator=(const PluginProcess&) = delete;

  ~PluginProcess() {
    if (in_) std::fclose(in_);
    if (out_) std::fclose(out_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  /// Sends one request line and returns the response line.
  std::string roundtrip(const std::string& line) {
    if (std::fputs(line.c_str(), in_) < 0 || std::fputc('\n', in_) == EOF ||
        std::fflush(in_) != 0) {
      dead_ = true;
      throw PropagationError("plugin: process closed its input");
    }
    std::string response;
    int c;
    while ((c = std::fgetc(out_)) != EOF && c != '\n') response.push_back(static_cast<char>(c));
    if (c == EOF && response.empty()) {
      dead_ = true;
      throw PropagationError("plugin: process exited without responding");
    }
    return response;
  }

  bool dead() const { return dead_; }

 private:
  pid_t pid_ = -1;
  std::FILE* in_ = nullptr;
  std::FILE* out_ = nullptr;
  bool dead_ = false;
};

}  // namespace detail

/// Pool of plugin processes; each request holds one process exclusively.
class PluginPropagator final : public Propagator {
 public:
  PluginPropagator(std::string command, int processes)
      : command_(std::move(command)), slots_(static_cast<std::size_t>(std::max(1, processes))) {
    if (command_.empty()) throw ConfigError("plugin propagator requires a command");
    // A dead child must surface as an error, not kill us with SIGPIPE.
    std::signal(SIGPIPE, SIG_IGN);
  }

  ProbMask propagate(const VideoContext& video, const ProbMask& source, FrameId from,
                     FrameId to) override {
    namespace fs = std::filesystem;
    const std::size_t slot = acquire();
    struct Release {
      PluginPropagator* self;
      std::size_t slot;
      ~Release() { self->release(slot); }
    } release{this, slot};

    fs::path dir = video.scratch_dir.empty() ? fs::temp_directory_path() / "mcmpg-plugin"
                                             : video.scratch_dir;
    fs::create_directories(dir);
    const std::string stem = "req_" + std::to_string(::getpid()) + "_" +
                             std::to_string(counter_.fetch_add(1));
    const fs::path mask_png = dir / (stem + "_mask.png");
    const fs::path prob_png = dir / (stem + "_prob.png");
    struct Cleanup {
      fs::path a, b;
      ~Cleanup() {
        std::error_code ec;
        fs::remove(a, ec);
        fs::remove(b, ec);
      }
    } cleanup{mask_png, prob_png};

    const Mask hard = binarize(source, 0.5);
    auto hard_px = hard.to_dense();
    for (auto& v : hard_px) v = v ? 255 : 0;
    write_gray_png(mask_png, source.shape(), hard_px);
    write_prob_png(prob_png, source);

    nlohmann::json req;
    req["video_id"] = video.video_id;
    nlohmann::json frames = nlohmann::json::array();
    const int step = to >= from ? 1 : -1;
    for (FrameId f = from;; f += step) {
      if (f >= 0 && static_cast<std::size_t>(f) < video.frame_paths.size()) {
        frames.push_back(video.frame_paths[static_cast<std::size_t>(f)]);
      }
      if (f == to) break;
    }
    req["frames"] = frames;
    req["source_frame"] = from;
    req["target_frame"] = to;
    req["mask_png"] = mask_png.string();
    req["prob_png"] = prob_png.string();

    auto& proc = slots_[slot];
    if (!proc || proc->dead()) proc = std::make_unique<detail::PluginProcess>(command_);
    const std::string line = proc->roundtrip(req.dump());

    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw PropagationError("plugin: malformed response: " + line);
    }
    if (!resp.is_object()) throw PropagationError("plugin: malformed response: " + line);
    if (resp.contains("error")) {
      throw PropagationError("plugin: " + resp["error"].get<std::string>());
    }
    if (!resp.contains("prob_png") || !resp["prob_png"].is_string()) {
      throw PropagationError("plugin: response lacks prob_png: " + line);
    }
    ProbMask out;
    try {
      out = read_prob_png(resp["prob_png"].get<std::string>());
    } catch (const InputError& e) {
      throw PropagationError(std::string("plugin: ") + e.what());
    }
    if (!(out.shape() == source.shape())) {
      throw PropagationError("plugin: returned a " + to_string(out.shape()) + " mask for a " +
                             to_string(source.shape()) + " grid");
    }
    return out;
  }

 private:
  std::size_t acquire() {
    std::unique_lock lock(mutex_);
    for (;;) {
      for (std::size_t i = 0; i < busy_.size(); ++i) {
        if (!busy_[i]) {
          busy_[i] = true;
          return i;
        }
      }
      if (busy_.size() < slots_.size()) {
        busy_.push_back(true);
        return busy_.size() - 1;
      }
      cv_.wait(lock);
    }
  }
  void release(std::size_t slot) {
    {
      std::lock_guard lock(mutex_);
      busy_[slot] = false;
    }
    cv_.notify_one();
  }

  std::string command_;
  std::vector<std::unique_ptr<detail::PluginProcess>> slots_;
  std::vector<bool> busy_;
  std::mutex mutex_;
  std::condition_variable cv_;
  static inline std::atomic<std::uint64_t> counter_{0};
};

inline std::unique_ptr<Propagator> make_plugin_propagator(const PropagatorSpec& spec) {
  return std::make_unique<PluginPropagator>(spec.command, spec.processes);
}

}  // namespace mcmpg
