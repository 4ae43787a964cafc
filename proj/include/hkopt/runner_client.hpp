/* Copyright 2026 The hkopt Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Kernel runner clients: the line-delimited wire records, an in-process mock
// runner driven by a cost table, and a pool of runner subprocesses.

#ifndef HKOPT_RUNNER_CLIENT_HPP_
#define HKOPT_RUNNER_CLIENT_HPP_

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hkopt/core_model.hpp"
#include "hkopt/error.hpp"
#include "hkopt/util.hpp"

namespace hkopt {

inline constexpr int kProtocolVersion = 1;

enum class RunMode { CompileOnly, Full };

inline std::string_view run_mode_name(RunMode m) {
  return m == RunMode::CompileOnly ? "COMPILE_ONLY" : "FULL";
}

struct Tolerance {
  double atol = 1e-2;
  double rtol = 1e-2;
};

struct TimingProtocol {
  int warmup = 3;
  int iters = 10;
};

struct RunRequest {
  std::string request_id;
  RunMode mode = RunMode::Full;
  std::string candidate_source;
  std::string reference_source;
  std::vector<TensorSpec> input_spec;
  TimingProtocol timing;
  Tolerance tolerance;

  void validate() const {
    if (request_id.empty()) throw ValidationError("run request: empty request_id");
    if (mode == RunMode::Full && (reference_source.empty() || input_spec.empty()))
      throw ValidationError(
          "run request: FULL mode needs reference_source and input_spec");
  }
};

struct RunResponse {
  std::string request_id;
  bool compile_ok = false;
  bool correct = false;
  double runtime_ms = 0;
  double baseline_ms = 0;
  double max_abs_err = 0;
  std::optional<std::string> error_text;
  std::string device;

  /// Converts to a validated report; inconsistent records become failures.
  [[nodiscard]] ExecutionReport report() const {
    const double base = baseline_ms > 0 ? baseline_ms : 1.0;
    try {
      return {compile_ok, correct, correct ? runtime_ms : 0.0, base, error_text};
    } catch (const ValidationError& e) {
      return {false, false, 0.0, base,
              std::string("runner returned an invalid record: ") + e.what()};
    }
  }
};

inline json to_json(const RunRequest& r) {
  json specs = json::array();
  for (const auto& s : r.input_spec) specs.push_back(to_json(s));
  return {{"v", kProtocolVersion},
          {"request_id", r.request_id},
          {"mode", run_mode_name(r.mode)},
          {"candidate_source", r.candidate_source},
          {"reference_source", r.reference_source},
          {"input_spec", specs},
          {"timing", {{"warmup", r.timing.warmup}, {"iters", r.timing.iters}}},
          {"tolerance", {{"atol", r.tolerance.atol}, {"rtol", r.tolerance.rtol}}}};
}

inline json to_json(const RunResponse& r) {
  json j = {{"v", kProtocolVersion},
            {"request_id", r.request_id},
            {"compile_ok", r.compile_ok},
            {"correct", r.correct},
            {"runtime_ms", r.runtime_ms},
            {"baseline_ms", r.baseline_ms},
            {"max_abs_err", r.max_abs_err},
            {"error_text", r.error_text ? json(*r.error_text) : json(nullptr)}};
  if (!r.device.empty()) j["device"] = r.device;
  return j;
}

inline RunRequest run_request_from_json(const json& j) {
  const std::string ctx = "run request";
  RunRequest r;
  r.request_id = detail::get<std::string>(j, "request_id", ctx);
  const auto mode = detail::get<std::string>(j, "mode", ctx);
  if (mode == "FULL") r.mode = RunMode::Full;
  else if (mode == "COMPILE_ONLY") r.mode = RunMode::CompileOnly;
  else throw SchemaError(ctx + ": unknown mode '" + mode + "'");
  r.candidate_source = detail::get<std::string>(j, "candidate_source", ctx);
  r.reference_source = j.value("reference_source", std::string{});
  if (j.contains("input_spec"))
    for (const auto& s : j["input_spec"]) r.input_spec.push_back(tensor_spec_from_json(s, ctx));
  if (j.contains("timing")) {
    r.timing.warmup = j["timing"].value("warmup", r.timing.warmup);
    r.timing.iters = j["timing"].value("iters", r.timing.iters);
  }
  if (j.contains("tolerance")) {
    r.tolerance.atol = j["tolerance"].value("atol", r.tolerance.atol);
    r.tolerance.rtol = j["tolerance"].value("rtol", r.tolerance.rtol);
  }
  return r;
}

inline RunResponse run_response_from_json(const json& j) {
  const std::string ctx = "run response";
  RunResponse r;
  r.request_id = detail::get<std::string>(j, "request_id", ctx);
  r.compile_ok = detail::get<bool>(j, "compile_ok", ctx);
  r.correct = detail::get<bool>(j, "correct", ctx);
  r.runtime_ms = j.value("runtime_ms", 0.0);
  r.baseline_ms = j.value("baseline_ms", 0.0);
  r.max_abs_err = j.value("max_abs_err", 0.0);
  if (j.contains("error_text") && !j["error_text"].is_null())
    r.error_text = j["error_text"].get<std::string>();
  r.device = j.value("device", std::string{});
  return r;
}

class RunnerClient {
 public:
  virtual ~RunnerClient() = default;
  /// Throws TransportError when the runner cannot be reached.
  virtual RunResponse run(const RunRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Mock runner
// ---------------------------------------------------------------------------

struct MockOutcome {
  bool compile_ok = false;
  bool correct = false;
  double runtime_ms = 0;
  std::optional<std::string> error_text;
};

inline MockOutcome mock_outcome_from_json(const json& j, const std::string& ctx) {
  MockOutcome o;
  o.compile_ok = detail::get<bool>(j, "compile_ok", ctx);
  o.correct = j.value("correct", false);
  o.runtime_ms = j.value("runtime_ms", 0.0);
  if (j.contains("error_text") && !j["error_text"].is_null())
    o.error_text = j["error_text"].get<std::string>();
  if (o.correct && (!o.compile_ok || !(o.runtime_ms > 0)))
    throw SchemaError(ctx + ": correct entries need compile_ok and runtime_ms > 0");
  return o;
}

/// Cost table: exact entries keyed by the SHA-256 of the candidate text,
/// then ordered marker rules (every listed substring present), then the
/// default outcome. The baseline is the reference source's own runtime when
/// the table knows it.
struct CostTable {
  struct Marker {
    std::vector<std::string> contains;
    MockOutcome outcome;
  };
  std::map<std::string, MockOutcome> entries;
  std::vector<Marker> markers;
  MockOutcome fallback{false, false, 0, "mock: unknown source"};
  double default_baseline_ms = 1.0;

  [[nodiscard]] const MockOutcome& lookup(const std::string& source) const {
    if (auto it = entries.find(sha256_hex(source)); it != entries.end())
      return it->second;
    for (const auto& m : markers) {
      bool all = true;
      for (const auto& s : m.contains) all = all && source.find(s) != std::string::npos;
      if (all) return m.outcome;
    }
    return fallback;
  }
};

inline CostTable cost_table_from_json(const json& j) {
  const std::string ctx = "cost table";
  CostTable t;
  if (j.contains("entries"))
    for (const auto& [hash, e] : j["entries"].items())
      t.entries.emplace(hash, mock_outcome_from_json(e, ctx + " entry " + hash));
  if (j.contains("markers"))
    for (std::size_t i = 0; i < j["markers"].size(); ++i) {
      const auto& m = j["markers"][i];
      const auto mctx = ctx + " marker[" + std::to_string(i) + "]";
      auto contains = detail::field(m, "contains", mctx);
      CostTable::Marker mk;
      if (contains.is_string()) mk.contains.push_back(contains.get<std::string>());
      else mk.contains = contains.get<std::vector<std::string>>();
      mk.outcome = mock_outcome_from_json(m, mctx);
      t.markers.push_back(std::move(mk));
    }
  if (j.contains("default")) t.fallback = mock_outcome_from_json(j["default"], ctx + " default");
  t.default_baseline_ms = j.value("default_baseline_ms", t.default_baseline_ms);
  if (!(t.default_baseline_ms > 0))
    throw SchemaError(ctx + ": default_baseline_ms must be positive");
  return t;
}

/// Deterministic in-process runner answering from a cost table.
class MockRunner : public RunnerClient {
 public:
  explicit MockRunner(CostTable table) : table_(std::move(table)) {}

  RunResponse run(const RunRequest& req) override {
    RunResponse r;
    r.request_id = req.request_id;
    r.device = "mock";
    const auto& ref = table_.lookup(req.reference_source);
    r.baseline_ms = ref.correct ? ref.runtime_ms : table_.default_baseline_ms;
    const auto& out = table_.lookup(req.candidate_source);
    r.compile_ok = out.compile_ok;
    if (req.mode == RunMode::Full) {
      r.correct = out.correct;
      r.runtime_ms = out.correct ? out.runtime_ms : 0.0;
      r.max_abs_err = out.correct || !out.compile_ok ? 0.0 : 1.0;
    }
    r.error_text = out.error_text;
    return r;
  }

  [[nodiscard]] const CostTable& table() const { return table_; }

 private:
  CostTable table_;
};

// ---------------------------------------------------------------------------
// Subprocess runner pool
// ---------------------------------------------------------------------------

namespace detail {

/// One runner child speaking JSON lines over pipes.
class RunnerProcess {
 public:
  explicit RunnerProcess(const std::vector<std::string>& argv) {
    if (argv.empty()) throw ConfigError("runner command is empty");
    int in_pipe[2], out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0)
      throw TransportError(std::string("pipe: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) throw TransportError(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
  }

  ~RunnerProcess() {
    ::close(to_child_);
    ::close(from_child_);
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }

  RunnerProcess(const RunnerProcess&) = delete;
  RunnerProcess& operator=(const RunnerProcess&) = delete;

  std::string roundtrip(const std::string& line, double timeout_s) {
    std::string out = line + "\n";
    const char* p = out.data();
    std::size_t left = out.size();
    while (left > 0) {
      ssize_t n = ::write(to_child_, p, left);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError("runner process closed its input");
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(timeout_s);
    while (true) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string reply = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return reply;
      }
      const auto left_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               deadline - std::chrono::steady_clock::now())
                               .count();
      if (left_ms <= 0) throw TransportError("runner response timed out");
      pollfd pfd{from_child_, POLLIN, 0};
      int rc = ::poll(&pfd, 1, static_cast<int>(left_ms));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) continue;
      char chunk[65536];
      ssize_t n = ::read(from_child_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError("runner process exited");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

}  // namespace detail

/// Pool of long-lived runner processes. A process that fails a round trip is
/// discarded and replaced on the next request.
class ProcessRunnerClient : public RunnerClient {
 public:
  ProcessRunnerClient(std::vector<std::string> argv, int processes,
                      double timeout_s = 60.0)
      : argv_(std::move(argv)), capacity_(std::max(1, processes)), timeout_s_(timeout_s) {
    ::signal(SIGPIPE, SIG_IGN);
  }

  RunResponse run(const RunRequest& req) override {
    auto proc = acquire();
    try {
      auto line = proc->roundtrip(to_json(req).dump(), timeout_s_);
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw TransportError(std::string("malformed runner response: ") + e.what());
      }
      RunResponse resp;
      try {
        resp = run_response_from_json(j);
      } catch (const SchemaError& e) {
        throw TransportError(e.what());
      }
      if (resp.request_id != req.request_id)
        throw TransportError("runner answered request '" + resp.request_id +
                             "' instead of '" + req.request_id + "'");
      release(std::move(proc));
      return resp;
    } catch (...) {
      discard();
      throw;
    }
  }

 private:
  std::unique_ptr<detail::RunnerProcess> acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !idle_.empty() || live_ < capacity_; });
    if (!idle_.empty()) {
      auto p = std::move(idle_.front());
      idle_.pop_front();
      return p;
    }
    ++live_;
    lock.unlock();
    try {
      return std::make_unique<detail::RunnerProcess>(argv_);
    } catch (...) {
      discard();
      throw;
    }
  }

  void release(std::unique_ptr<detail::RunnerProcess> p) {
    std::lock_guard lock(mu_);
    idle_.push_back(std::move(p));
    cv_.notify_one();
  }

  void discard() {
    std::lock_guard lock(mu_);
    --live_;
    cv_.notify_one();
  }

  std::vector<std::string> argv_;
  int capacity_;
  double timeout_s_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::unique_ptr<detail::RunnerProcess>> idle_;
  int live_ = 0;
};

}  // namespace hkopt

#endif  // HKOPT_RUNNER_CLIENT_HPP_
