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

// Inference loop: the policy picks an action, the coder implements it, the
// runner verifies the result, and only faster correct kernels are kept.

#ifndef HKOPT_ORCHESTRATOR_HPP_
#define HKOPT_ORCHESTRATOR_HPP_

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hkopt/action_space.hpp"
#include "hkopt/coder.hpp"
#include "hkopt/core_model.hpp"
#include "hkopt/offline_env.hpp"
#include "hkopt/policy.hpp"
#include "hkopt/runner_client.hpp"
#include "hkopt/util.hpp"

namespace hkopt {

// ---------------------------------------------------------------------------
// Example bank and prompts
// ---------------------------------------------------------------------------

/// Per-kind example texts, each kind's files in file-name order.
class ExampleBank {
 public:
  ExampleBank() = default;
  explicit ExampleBank(std::map<ActionKind, std::vector<std::string>> examples)
      : examples_(std::move(examples)) {}

  [[nodiscard]] const std::vector<std::string>& examples(ActionKind kind) const {
    static const std::vector<std::string> kNone;
    auto it = examples_.find(kind);
    return it == examples_.end() ? kNone : it->second;
  }

 private:
  std::map<ActionKind, std::vector<std::string>> examples_;
};

/// Reads `<dir>/<kind>/*.txt`. Missing kind directories are left empty.
inline ExampleBank load_example_bank(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw ConfigError("example bank not found: " + dir.string());
  std::map<ActionKind, std::vector<std::string>> out;
  for (auto kind : kOptimizationKinds) {
    const auto sub = dir / std::string(kind_name(kind));
    if (!std::filesystem::is_directory(sub)) continue;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(sub))
      if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out[kind].push_back(read_file(f));
  }
  return ExampleBank(std::move(out));
}

struct PromptBundle {
  std::string prev_code;
  std::string action_text;
  std::vector<std::string> examples;
  std::string assembled;
};

/// The previous kernel, the action text and each example appear verbatim
/// in the assembled prompt, in that order.
inline bool prompt_is_complete(const PromptBundle& b) {
  auto pos = b.assembled.find(b.prev_code);
  if (pos == std::string::npos) return false;
  pos = b.assembled.find(b.action_text, pos + b.prev_code.size());
  if (pos == std::string::npos) return false;
  pos += b.action_text.size();
  for (const auto& ex : b.examples) {
    pos = b.assembled.find(ex, pos);
    if (pos == std::string::npos) return false;
    pos += ex.size();
  }
  return true;
}

inline PromptBundle build_prompt(const KernelSource& prev,
                                 const OptimizationAction& action,
                                 const ExampleBank& bank, int max_examples = 3,
                                 const std::optional<std::string>& feedback = {}) {
  if (action.is_stop()) throw PreconditionError("build_prompt: stop has no prompt");
  const auto& all = bank.examples(action.kind());
  if (all.empty())
    throw ConfigError("example bank has no " + std::string(kind_name(action.kind())) +
                      " examples");
  PromptBundle b;
  b.prev_code = prev.text();
  b.action_text = render_action(action);
  const auto k = std::min<std::size_t>(all.size(), std::max(0, max_examples));
  b.examples.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));

  std::string p;
  p += "You are optimizing a GPU kernel written in a tile-level kernel language.\n\n";
  p += "Current kernel (line numbers count from the first line below):\n<kernel>\n";
  p += b.prev_code;
  if (!b.prev_code.empty() && b.prev_code.back() != '\n') p += '\n';
  p += "</kernel>\n\n";
  p += "Apply exactly this optimization: " + b.action_text + "\n";
  p += "Change only what the optimization requires and keep the function signature.\n\n";
  p += "Examples of " + std::string(kind_name(action.kind())) + ":\n";
  for (std::size_t i = 0; i < b.examples.size(); ++i)
    p += "<example " + std::to_string(i + 1) + ">\n" + b.examples[i] + "\n</example>\n";
  if (feedback) p += "\nYour previous attempt at this optimization was rejected:\n" + *feedback + "\n";
  p += "\nReply with the complete rewritten kernel in one fenced code block.\n";
  b.assembled = std::move(p);
  return b;
}

inline std::string translation_prompt(const KernelTask& task) {
  std::string p;
  p += "Translate the reference implementation below into the tile-level kernel "
       "language. Keep the function name, arguments and results unchanged.\n\n";
  p += "Task: " + task.description + "\n<kernel>\n";
  p += task.reference_source;
  if (!task.reference_source.empty() && task.reference_source.back() != '\n') p += '\n';
  p += "</kernel>\n\nReply with the complete kernel in one fenced code block.\n";
  return p;
}

/// Body of the last complete fenced block.
inline KernelSource extract_code(const std::string& response) {
  std::optional<std::string> last;
  std::optional<std::string> open;
  for (auto line : split_lines(response)) {
    const auto t = trim(line);
    const bool fence = t.substr(0, 3) == "```";
    if (!open) {
      if (fence) open = std::string{};
    } else if (fence && t == "```") {
      last = std::move(*open);
      open.reset();
    } else {
      *open += std::string(line) + "\n";
    }
  }
  if (!last) throw ExtractionError("response has no fenced code block");
  if (trim(*last).empty()) throw ExtractionError("fenced code block is empty");
  return KernelSource(Language::KernelDsl, *last);
}

// ---------------------------------------------------------------------------
// Optimization loop
// ---------------------------------------------------------------------------

struct InferenceConfig {
  int max_steps = 8;
  bool translate = true;
  bool sample = false;
  double temperature = 1.0;
  int examples_per_prompt = 3;
  int retries = 2;
  bool uniform_fallback = false;  // on policy failure score uniformly instead of stopping
  std::uint64_t seed = 0;
  RewardConfig reward;
  TimingProtocol timing;
  Tolerance tolerance;
};

struct OptimizationStep {
  int step = 0;
  bool translation = false;
  std::optional<OptimizationAction> action;
  std::optional<std::string> candidate_source;
  ExecutionReport report;
  bool accepted = false;
  std::string prompt;
  std::string response;
};

struct OptimizationResult {
  std::string task_id;
  double baseline_ms = 0;
  bool translation_requested = false;
  bool translation_ok = false;
  KernelSource final_source;
  ExecutionReport final_report;
  std::vector<OptimizationStep> steps;
  double best_speedup = 0;
  int coder_calls = 0;
};

inline json to_json(const OptimizationStep& s) {
  return {{"step", s.step},
          {"phase", s.translation ? "translate" : "optimize"},
          {"action", s.action ? json(render_action(*s.action)) : json(nullptr)},
          {"candidate_source", s.candidate_source ? json(*s.candidate_source) : json(nullptr)},
          {"report", to_json(s.report)},
          {"accepted", s.accepted}};
}

inline json to_json(const OptimizationResult& r) {
  json steps = json::array();
  for (const auto& s : r.steps) steps.push_back(to_json(s));
  return {{"task_id", r.task_id},
          {"baseline_ms", r.baseline_ms},
          {"translation_requested", r.translation_requested},
          {"translation_ok", r.translation_ok},
          {"coder_calls", r.coder_calls},
          {"best_speedup", r.best_speedup},
          {"final_source", to_json(r.final_source)},
          {"final_report", to_json(r.final_report)},
          {"steps", steps}};
}

/// One episode-log record per coder call.
inline json episode_record(const std::string& task_id, const OptimizationStep& s) {
  return {{"task_id", task_id},
          {"step", s.step},
          {"phase", s.translation ? "translate" : "optimize"},
          {"action_text", s.action ? json(render_action(*s.action)) : json(nullptr)},
          {"prompt_hash", sha256_hex(s.prompt)},
          {"response_hash", sha256_hex(s.response)},
          {"compile_ok", s.report.compile_ok()},
          {"correct", s.report.correct()},
          {"runtime_ms", s.report.runtime_ms()},
          {"accepted", s.accepted},
          {"prompt", s.prompt},
          {"response", s.response}};
}

inline std::string episode_log(const OptimizationResult& r) {
  std::string out;
  for (const auto& s : r.steps) out += episode_record(r.task_id, s).dump() + "\n";
  return out;
}

namespace detail {

template <typename F>
auto with_retries(int retries, F&& f) -> decltype(f(0)) {
  for (int attempt = 0;; ++attempt) {
    try {
      return f(attempt);
    } catch (const TransportError&) {
      if (attempt >= retries) throw;
    }
  }
}

inline std::uint64_t task_seed(std::uint64_t seed, const std::string& task_id) {
  return seed ^ std::stoull(sha256_hex(task_id).substr(0, 15), nullptr, 16);
}

}  // namespace detail

struct OptimizeContext {
  PolicyBackend& policy;
  CoderClient& coder;
  RunnerClient& runner;
  const ExampleBank& bank;
  HardwareSpec hardware;
};

/// Runs one task. Throws when the reference cannot be verified; every later
/// failure is recorded as a rejected step.
inline OptimizationResult optimize(const KernelTask& task, OptimizeContext ctx,
                                   const InferenceConfig& cfg) {
  auto verify = [&](const std::string& source, const std::string& id) {
    RunRequest req;
    req.mode = RunMode::Full;
    req.candidate_source = source;
    req.reference_source = task.reference_source;
    req.input_spec = task.input_spec;
    req.timing = cfg.timing;
    req.tolerance = cfg.tolerance;
    return detail::with_retries(cfg.retries, [&](int attempt) {
      req.request_id = id + "#" + std::to_string(attempt);
      return ctx.runner.run(req).report();
    });
  };

  const ExecutionReport baseline = verify(task.reference_source, task.task_id + "/baseline");
  if (!baseline.correct())
    throw PreconditionError("task '" + task.task_id +
                            "': reference does not run correctly: " +
                            baseline.error_text().value_or(baseline.summary()));

  OptimizationResult res{task.task_id,
                         baseline.baseline_ms(),
                         cfg.translate && cfg.max_steps > 0,
                         false,
                         KernelSource(Language::Reference, task.reference_source),
                         baseline,
                         {},
                         0,
                         0};

  // Coder call plus extraction and verification, never throwing.
  auto attempt_step = [&](OptimizationStep& step, const std::string& prompt) {
    step.prompt = prompt;
    ++res.coder_calls;
    const std::string id = task.task_id + "/" + std::to_string(step.step);
    try {
      step.response = detail::with_retries(
          cfg.retries, [&](int) { return ctx.coder.complete(prompt); });
    } catch (const TransportError& e) {
      step.report = ExecutionReport::compile_failure(
          std::string("coder unreachable: ") + e.what(), res.baseline_ms);
      return;
    }
    std::optional<KernelSource> candidate;
    try {
      candidate = extract_code(step.response);
    } catch (const ExtractionError& e) {
      step.report = ExecutionReport::compile_failure(e.what(), res.baseline_ms);
      return;
    }
    step.candidate_source = candidate->text();
    try {
      step.report = verify(candidate->text(), id);
    } catch (const TransportError& e) {
      step.report = ExecutionReport::compile_failure(
          std::string("runner unreachable: ") + e.what(), res.baseline_ms);
    }
  };

  int step_no = 0;
  if (cfg.translate && cfg.max_steps > 0) {
    OptimizationStep step{step_no++, true, std::nullopt, std::nullopt,
                          ExecutionReport::compile_failure("not run", res.baseline_ms)};
    attempt_step(step, translation_prompt(task));
    if (step.report.correct()) {
      step.accepted = true;
      res.translation_ok = true;
      res.final_source = KernelSource(Language::KernelDsl, *step.candidate_source);
      res.final_report = step.report;
    }
    res.steps.push_back(std::move(step));
  }

  Rng rng(detail::task_seed(cfg.seed, task.task_id));
  std::vector<HistoryEntry> history;
  std::optional<std::pair<std::string, std::string>> feedback;  // action, error
  while (res.coder_calls < cfg.max_steps) {
    Observation obs{task, res.final_source, static_cast<int>(history.size()), history,
                    ctx.hardware};
    auto catalog = enumerate_actions(obs);
    std::optional<PolicyDistribution> dist;
    try {
      dist = score_actions(obs, catalog, ctx.policy, cfg.temperature);
    } catch (const BackendError&) {
      if (!cfg.uniform_fallback) break;
      dist = uniform_distribution(catalog);
    }
    const std::size_t idx =
        cfg.sample ? sample_index(dist->probabilities, rng) : dist->argmax();
    const auto& action = catalog[idx];
    if (action.is_stop()) break;

    const std::string text = render_action(action);
    std::optional<std::string> note;
    if (feedback && feedback->first == text) {
      note = feedback->second;
      feedback.reset();
    }
    auto bundle = build_prompt(res.final_source, action, ctx.bank,
                               cfg.examples_per_prompt, note);
    OptimizationStep step{step_no++, false, action, std::nullopt,
                          ExecutionReport::compile_failure("not run", res.baseline_ms)};
    attempt_step(step, bundle.assembled);

    const double reward = compute_reward(res.final_report, step.report,
                                         static_cast<int>(history.size()), cfg.reward);
    step.accepted = step.report.correct() &&
                    step.report.runtime_ms() < res.final_report.runtime_ms();
    history.push_back({action, reward, step.report.summary()});
    if (step.accepted) {
      res.final_source = KernelSource(Language::KernelDsl, *step.candidate_source);
      res.final_report = step.report;
    } else if (!step.report.correct() && step.report.error_text()) {
      feedback.emplace(text, *step.report.error_text());
    }
    res.steps.push_back(std::move(step));
  }

  res.best_speedup = res.final_report.correct()
                         ? res.baseline_ms / res.final_report.runtime_ms()
                         : 0.0;
  return res;
}

}  // namespace hkopt

#endif  // HKOPT_ORCHESTRATOR_HPP_
