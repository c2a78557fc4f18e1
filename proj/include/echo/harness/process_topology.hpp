// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "echo/core/run_config.hpp"
#include "echo/net/http.hpp"
#include "echo/trainer/trainer.hpp"

extern char** environ;

namespace echo::harness {

/// Ports and worker count of a multi-process deployment. Port 0 means
/// "pick a free one".
struct TopologySpec {
  std::string host = "127.0.0.1";
  int snapshot_port = 0;
  int buffer_port = 0;
  int coordinator_port = 0;
  std::uint32_t workers = 1;
  std::vector<int> worker_ports;
  std::optional<std::string> data_dir;
};

inline TopologySpec topology_from_json(const nlohmann::json& j) {
  TopologySpec t;
  t.host = j.value("host", t.host);
  t.snapshot_port = j.value("snapshot_port", 0);
  t.buffer_port = j.value("buffer_port", 0);
  t.coordinator_port = j.value("coordinator_port", 0);
  t.workers = j.value("workers", 1u);
  if (t.workers < 1) throw SchemaError("topology needs at least one worker");
  if (j.contains("worker_ports")) t.worker_ports = j.at("worker_ports").get<std::vector<int>>();
  if (!t.worker_ports.empty() && t.worker_ports.size() != t.workers) {
    throw SchemaError("worker_ports must list one port per worker");
  }
  if (j.contains("data_dir") && !j.at("data_dir").is_null()) t.data_dir = j.at("data_dir").get<std::string>();
  return t;
}

inline TopologySpec load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read topology file " + path);
  try {
    return topology_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("topology file " + path + ": " + e.what());
  }
}

/// Asks the kernel for an unused TCP port on host.
inline int free_port(const std::string& host) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = 0;
  ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
  socklen_t len = sizeof(addr);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    ::close(fd);
    throw TransportError("cannot find a free port on " + host);
  }
  ::close(fd);
  return ntohs(addr.sin_port);
}

/// A spawned child process, terminated on destruction.
class ChildProcess {
 public:
  ChildProcess() = default;

  explicit ChildProcess(const std::vector<std::string>& argv) {
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    if (::posix_spawn(&pid_, args[0], nullptr, nullptr, args.data(), environ) != 0) {
      throw Error("cannot spawn " + argv[0]);
    }
  }

  ChildProcess(ChildProcess&& o) noexcept : pid_(std::exchange(o.pid_, -1)) {}
  ChildProcess& operator=(ChildProcess&& o) noexcept {
    if (this != &o) {
      terminate();
      pid_ = std::exchange(o.pid_, -1);
    }
    return *this;
  }
  ~ChildProcess() { terminate(); }

  pid_t pid() const { return pid_; }
  bool running() const { return pid_ > 0; }

  /// SIGKILL without cleanup, as a crash would.
  void kill() { signal_and_reap(SIGKILL); }

  /// SIGTERM, then SIGKILL if the child has not exited within the grace.
  void terminate(std::chrono::milliseconds grace = std::chrono::milliseconds{3000}) {
    if (pid_ <= 0) return;
    ::kill(pid_, SIGTERM);
    const auto until = std::chrono::steady_clock::now() + grace;
    while (std::chrono::steady_clock::now() < until) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds{20});
    }
    signal_and_reap(SIGKILL);
  }

 private:
  void signal_and_reap(int sig) {
    if (pid_ <= 0) return;
    ::kill(pid_, sig);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }

  pid_t pid_ = -1;
};

inline std::string self_executable() { return std::filesystem::read_symlink("/proc/self/exe").string(); }

/// Polls GET /healthz until it answers or the deadline passes.
inline void wait_healthy(const net::Url& url, std::chrono::milliseconds deadline = std::chrono::milliseconds{15'000}) {
  net::Client c(url, std::chrono::milliseconds{1000});
  net::with_retry([&] { return c.call("GET", "/healthz"); }, deadline, std::chrono::milliseconds{50});
}

/// The full topology as separate OS processes of the `echo` executable.
class ProcessTopology {
 public:
  ProcessTopology(TopologySpec spec, RunConfig cfg, std::string exe = self_executable())
      : spec_(std::move(spec)), cfg_(std::move(cfg)), exe_(std::move(exe)) {
    validate(cfg_);
    scratch_ = std::filesystem::temp_directory_path() / ("echo-topology-" + std::to_string(::getpid()) + "-" +
                                                         std::to_string(steady_ms()));
    std::filesystem::create_directories(scratch_);
    config_path_ = (scratch_ / "run_config.json").string();
    std::ofstream(config_path_) << to_json(cfg_).dump(2);
    auto pick = [&](int p) { return p != 0 ? p : free_port(spec_.host); };
    snapshot_url_ = {spec_.host, pick(spec_.snapshot_port)};
    buffer_url_ = {spec_.host, pick(spec_.buffer_port)};
    coordinator_url_ = {spec_.host, pick(spec_.coordinator_port)};
    for (std::uint32_t i = 0; i < spec_.workers; ++i) {
      worker_urls_.push_back({spec_.host, pick(spec_.worker_ports.empty() ? 0 : spec_.worker_ports[i])});
    }
    const auto data_dir = spec_.data_dir ? *spec_.data_dir : (scratch_ / "snapshots").string();
    services_.emplace_back(std::vector<std::string>{exe_, "snapshot-store", "--host", spec_.host, "--port",
                                                    std::to_string(snapshot_url_.port), "--data-dir", data_dir});
    services_.emplace_back(std::vector<std::string>{exe_, "replay-buffer", "--host", spec_.host, "--port",
                                                    std::to_string(buffer_url_.port), "--config", config_path_});
    services_.emplace_back(std::vector<std::string>{exe_, "coordinator", "--host", spec_.host, "--port",
                                                    std::to_string(coordinator_url_.port), "--config", config_path_});
    wait_healthy(snapshot_url_);
    wait_healthy(buffer_url_);
    wait_healthy(coordinator_url_);
    workers_.resize(spec_.workers);
    for (std::uint32_t i = 0; i < spec_.workers; ++i) start_worker(i);
  }

  ~ProcessTopology() { stop(); }

  ProcessTopology(const ProcessTopology&) = delete;
  ProcessTopology& operator=(const ProcessTopology&) = delete;

  void start_worker(std::size_t i) {
    workers_.at(i) = ChildProcess({exe_, "inference-worker", "--mode", cfg_.mode == SyncMode::kAsync ? "async" : "sequential",
                                   "--worker-id", "worker-" + std::to_string(i), "--host", spec_.host, "--port",
                                   std::to_string(worker_urls_[i].port), "--config", config_path_, "--snapshot-url",
                                   snapshot_url_.str(), "--buffer-url", buffer_url_.str(), "--coordinator-url",
                                   coordinator_url_.str(), "--version-gap-threshold",
                                   std::to_string(cfg_.version_gap_threshold), "--seed", std::to_string(cfg_.seed)});
    wait_healthy(worker_urls_[i]);
  }

  void kill_worker(std::size_t i) { workers_.at(i).kill(); }

  void stop() {
    for (auto& w : workers_) w.terminate();
    for (auto it = services_.rbegin(); it != services_.rend(); ++it) it->terminate();
    std::error_code ec;
    std::filesystem::remove_all(scratch_, ec);
  }

  trainer::TrainerEndpoints endpoints() const {
    return {snapshot_url_, worker_urls_, buffer_url_, coordinator_url_};
  }

  nlohmann::json describe() const {
    nlohmann::json workers = nlohmann::json::array();
    for (const auto& u : worker_urls_) workers.push_back(u.str());
    return {{"snapshot_url", snapshot_url_.str()},
            {"buffer_url", buffer_url_.str()},
            {"coordinator_url", coordinator_url_.str()},
            {"worker_urls", workers},
            {"config", config_path_}};
  }

  const RunConfig& config() const { return cfg_; }

 private:
  TopologySpec spec_;
  RunConfig cfg_;
  std::string exe_;
  std::filesystem::path scratch_;
  std::string config_path_;
  net::Url snapshot_url_, buffer_url_, coordinator_url_;
  std::vector<net::Url> worker_urls_;
  std::vector<ChildProcess> services_;
  std::vector<ChildProcess> workers_;
};

}  // namespace echo::harness
