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

// Shared data model: benchmark tasks, hardware descriptors, kernel sources,
// optimization actions and execution outcomes, plus their JSON encoding.

#ifndef HKOPT_CORE_MODEL_HPP_
#define HKOPT_CORE_MODEL_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hkopt/error.hpp"
#include "hkopt/util.hpp"

namespace hkopt {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class Suite { KbL1, KbL2, KbL3, TbG, TbT, Custom };

inline constexpr std::array<std::pair<Suite, std::string_view>, 6> kSuiteNames{{
    {Suite::KbL1, "KB-L1"},
    {Suite::KbL2, "KB-L2"},
    {Suite::KbL3, "KB-L3"},
    {Suite::TbG, "TB-G"},
    {Suite::TbT, "TB-T"},
    {Suite::Custom, "CUSTOM"},
}};

inline std::string_view suite_name(Suite s) {
  for (const auto& [v, n] : kSuiteNames)
    if (v == s) return n;
  return "CUSTOM";
}

inline std::optional<Suite> suite_from_name(std::string_view name) {
  for (const auto& [v, n] : kSuiteNames)
    if (n == name) return v;
  return std::nullopt;
}

enum class Language { Reference, KernelDsl };

inline std::string_view language_name(Language l) {
  return l == Language::Reference ? "REFERENCE" : "KERNEL_DSL";
}

inline std::optional<Language> language_from_name(std::string_view name) {
  if (name == "REFERENCE") return Language::Reference;
  if (name == "KERNEL_DSL") return Language::KernelDsl;
  return std::nullopt;
}

/// Optimization kinds in catalog order. Stop is the terminal action.
enum class ActionKind { Tiling, Fusion, Pipeline, Reordering, Stop };

inline constexpr std::array<ActionKind, 4> kOptimizationKinds{
    ActionKind::Tiling, ActionKind::Fusion, ActionKind::Pipeline,
    ActionKind::Reordering};

inline std::string_view kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::Tiling: return "tiling";
    case ActionKind::Fusion: return "fusion";
    case ActionKind::Pipeline: return "pipeline";
    case ActionKind::Reordering: return "reordering";
    case ActionKind::Stop: return "stop";
  }
  return "stop";
}

inline std::optional<ActionKind> kind_from_name(std::string_view name) {
  for (auto k : {ActionKind::Tiling, ActionKind::Fusion, ActionKind::Pipeline,
                 ActionKind::Reordering, ActionKind::Stop})
    if (kind_name(k) == name) return k;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Tasks and hardware
// ---------------------------------------------------------------------------

struct TensorSpec {
  std::vector<std::int64_t> shape;
  std::string dtype = "float32";
  std::uint64_t seed = 0;

  bool operator==(const TensorSpec&) const = default;
};

struct KernelTask {
  std::string task_id;
  std::string description;
  std::string reference_source;
  std::vector<TensorSpec> input_spec;
  Suite suite = Suite::Custom;

  bool operator==(const KernelTask&) const = default;

  void validate() const {
    if (task_id.empty()) throw ValidationError("task_id is empty");
    if (input_spec.empty())
      throw ValidationError("task " + task_id + ": input_spec is empty");
    for (const auto& t : input_spec) {
      if (t.shape.empty())
        throw ValidationError("task " + task_id + ": tensor with empty shape");
      for (auto d : t.shape)
        if (d < 1)
          throw ValidationError("task " + task_id +
                                ": shape dimension must be >= 1");
    }
  }
};

/// GPU platform descriptor.
struct HardwareSpec {
  std::string name;
  std::string architecture;
  std::int64_t sm_count = 0;
  double global_memory_gb = 0;
  double shared_memory_per_sm_kb = 0;
  double l2_cache_mb = 0;
  double memory_bandwidth_gbps = 0;
  double fp32_tflops = 0;

  bool operator==(const HardwareSpec&) const = default;

  void validate() const {
    auto positive = [&](double v, const char* field) {
      if (!(v > 0))
        throw ValidationError("hardware " + name + ": " + field +
                              " must be positive");
    };
    positive(static_cast<double>(sm_count), "sm_count");
    positive(global_memory_gb, "global_memory_gb");
    positive(shared_memory_per_sm_kb, "shared_memory_per_sm_kb");
    positive(l2_cache_mb, "l2_cache_mb");
    positive(memory_bandwidth_gbps, "memory_bandwidth_gbps");
    positive(fp32_tflops, "fp32_tflops");
  }
};

// ---------------------------------------------------------------------------
// Sources, regions, actions
// ---------------------------------------------------------------------------

class KernelSource {
 public:
  KernelSource(Language language, std::string text)
      : language_(language), text_(std::move(text)) {
    if (text_.empty()) throw ValidationError("kernel source text is empty");
    line_count_ = static_cast<int>(split_lines(text_).size());
  }

  [[nodiscard]] Language language() const { return language_; }
  [[nodiscard]] const std::string& text() const { return text_; }
  [[nodiscard]] int line_count() const { return line_count_; }

  bool operator==(const KernelSource&) const = default;

 private:
  Language language_;
  std::string text_;
  int line_count_ = 0;
};

/// Inclusive 1-based line range.
class CodeRegion {
 public:
  CodeRegion(int start_line, int end_line, std::string label = {})
      : start_(start_line), end_(end_line), label_(std::move(label)) {
    if (start_ < 1 || start_ > end_)
      throw ValidationError("invalid code region " + std::to_string(start_) +
                            "-" + std::to_string(end_));
  }

  [[nodiscard]] int start_line() const { return start_; }
  [[nodiscard]] int end_line() const { return end_; }
  [[nodiscard]] const std::string& label() const { return label_; }

  /// Same lines, ignoring the label.
  [[nodiscard]] bool same_lines(const CodeRegion& o) const {
    return start_ == o.start_ && end_ == o.end_;
  }

  bool operator==(const CodeRegion&) const = default;

 private:
  int start_;
  int end_;
  std::string label_;
};

class OptimizationAction {
 public:
  static OptimizationAction stop() { return OptimizationAction(); }

  OptimizationAction(ActionKind kind, CodeRegion region)
      : kind_(kind), region_(std::move(region)) {
    if (kind_ == ActionKind::Stop)
      throw ValidationError("stop action carries no region");
  }

  [[nodiscard]] ActionKind kind() const { return kind_; }
  [[nodiscard]] bool is_stop() const { return kind_ == ActionKind::Stop; }
  [[nodiscard]] const std::optional<CodeRegion>& region() const {
    return region_;
  }

  /// Equal kind and lines; labels are informational.
  [[nodiscard]] bool same_target(const OptimizationAction& o) const {
    if (kind_ != o.kind_) return false;
    if (is_stop()) return true;
    return region_->same_lines(*o.region_);
  }

  bool operator==(const OptimizationAction&) const = default;

 private:
  OptimizationAction() : kind_(ActionKind::Stop) {}

  ActionKind kind_;
  std::optional<CodeRegion> region_;
};

// ---------------------------------------------------------------------------
// Execution outcomes
// ---------------------------------------------------------------------------

/// Outcome of compiling, checking and timing one candidate. Enforces
/// correct => compile_ok and positive timings for correct reports.
class ExecutionReport {
 public:
  ExecutionReport(bool compile_ok, bool correct, double runtime_ms,
                  double baseline_ms, std::optional<std::string> error_text = {})
      : compile_ok_(compile_ok),
        correct_(correct),
        runtime_ms_(runtime_ms),
        baseline_ms_(baseline_ms),
        error_text_(std::move(error_text)) {
    if (correct_ && !compile_ok_)
      throw ValidationError("execution report: correct requires compile_ok");
    if (runtime_ms_ < 0 || baseline_ms_ < 0)
      throw ValidationError("execution report: negative timing");
    if (correct_ && !(runtime_ms_ > 0 && baseline_ms_ > 0))
      throw ValidationError(
          "execution report: correct requires positive runtime and baseline");
  }

  static ExecutionReport compile_failure(std::string error,
                                         double baseline_ms = 0) {
    return {false, false, 0, baseline_ms, std::move(error)};
  }

  [[nodiscard]] bool compile_ok() const { return compile_ok_; }
  [[nodiscard]] bool correct() const { return correct_; }
  [[nodiscard]] double runtime_ms() const { return runtime_ms_; }
  [[nodiscard]] double baseline_ms() const { return baseline_ms_; }
  [[nodiscard]] const std::optional<std::string>& error_text() const {
    return error_text_;
  }

  /// baseline / runtime when correct, else 0.
  [[nodiscard]] double speedup() const {
    return correct_ ? baseline_ms_ / runtime_ms_ : 0.0;
  }

  [[nodiscard]] std::string summary() const {
    if (!compile_ok_) return "compile_fail";
    if (!correct_) return "incorrect";
    return "correct";
  }

  bool operator==(const ExecutionReport&) const = default;

 private:
  bool compile_ok_;
  bool correct_;
  double runtime_ms_;
  double baseline_ms_;
  std::optional<std::string> error_text_;
};

struct HistoryEntry {
  OptimizationAction action;
  double reward = 0;
  std::string outcome;

  bool operator==(const HistoryEntry&) const = default;
};

struct Observation {
  KernelTask task;
  KernelSource current_source;
  int step_index = 0;
  std::vector<HistoryEntry> history;
  HardwareSpec hardware;

  bool operator==(const Observation&) const = default;

  void validate() const {
    if (static_cast<int>(history.size()) != step_index)
      throw ValidationError("observation history length != step_index");
  }
};

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

namespace detail {

/// Fetches a required field, raising a SchemaError naming `context`.
inline const json& field(const json& j, std::string_view name,
                         const std::string& context) {
  if (!j.is_object())
    throw SchemaError(context + ": expected an object");
  auto it = j.find(name);
  if (it == j.end())
    throw SchemaError(context + ": missing field '" + std::string(name) + "'");
  return *it;
}

template <typename T>
T get(const json& j, std::string_view name, const std::string& context) {
  const json& v = field(j, name, context);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw SchemaError(context + ": field '" + std::string(name) +
                      "' has the wrong type");
  }
}

inline double get_number(const json& j, std::string_view name,
                         const std::string& context) {
  const json& v = field(j, name, context);
  if (!v.is_number())
    throw SchemaError(context + ": field '" + std::string(name) +
                      "' must be a number");
  return v.get<double>();
}

}  // namespace detail

inline json to_json(const TensorSpec& t) {
  return {{"shape", t.shape}, {"dtype", t.dtype}, {"seed", t.seed}};
}

inline TensorSpec tensor_spec_from_json(const json& j,
                                        const std::string& context) {
  TensorSpec t;
  t.shape = detail::get<std::vector<std::int64_t>>(j, "shape", context);
  t.dtype = detail::get<std::string>(j, "dtype", context);
  t.seed = detail::get<std::uint64_t>(j, "seed", context);
  return t;
}

inline json to_json(const KernelTask& t) {
  json inputs = json::array();
  for (const auto& s : t.input_spec) inputs.push_back(to_json(s));
  return {{"task_id", t.task_id},
          {"description", t.description},
          {"reference_source", t.reference_source},
          {"input_spec", inputs},
          {"suite", suite_name(t.suite)}};
}

inline KernelTask task_from_json(const json& j, const std::string& context) {
  KernelTask t;
  t.task_id = detail::get<std::string>(j, "task_id", context);
  const std::string ctx = context + " (" + t.task_id + ")";
  t.description = detail::get<std::string>(j, "description", ctx);
  t.reference_source = detail::get<std::string>(j, "reference_source", ctx);
  const json& inputs = detail::field(j, "input_spec", ctx);
  if (!inputs.is_array())
    throw SchemaError(ctx + ": field 'input_spec' must be an array");
  for (std::size_t i = 0; i < inputs.size(); ++i)
    t.input_spec.push_back(tensor_spec_from_json(
        inputs[i], ctx + " input_spec[" + std::to_string(i) + "]"));
  auto suite = suite_from_name(detail::get<std::string>(j, "suite", ctx));
  if (!suite) throw SchemaError(ctx + ": field 'suite' has an unknown value");
  t.suite = *suite;
  try {
    t.validate();
  } catch (const ValidationError& e) {
    throw SchemaError(ctx + ": " + e.what());
  }
  return t;
}

inline json to_json(const HardwareSpec& h) {
  return {{"name", h.name},
          {"architecture", h.architecture},
          {"sm_count", h.sm_count},
          {"global_memory_gb", h.global_memory_gb},
          {"shared_memory_per_sm_kb", h.shared_memory_per_sm_kb},
          {"l2_cache_mb", h.l2_cache_mb},
          {"memory_bandwidth_gbps", h.memory_bandwidth_gbps},
          {"fp32_tflops", h.fp32_tflops}};
}

inline HardwareSpec hardware_from_json(const json& j,
                                       const std::string& context = "hardware") {
  HardwareSpec h;
  h.name = detail::get<std::string>(j, "name", context);
  h.architecture = detail::get<std::string>(j, "architecture", context);
  h.sm_count = static_cast<std::int64_t>(
      detail::get_number(j, "sm_count", context));
  h.global_memory_gb = detail::get_number(j, "global_memory_gb", context);
  h.shared_memory_per_sm_kb =
      detail::get_number(j, "shared_memory_per_sm_kb", context);
  h.l2_cache_mb = detail::get_number(j, "l2_cache_mb", context);
  h.memory_bandwidth_gbps =
      detail::get_number(j, "memory_bandwidth_gbps", context);
  h.fp32_tflops = detail::get_number(j, "fp32_tflops", context);
  h.validate();
  return h;
}

inline json to_json(const KernelSource& s) {
  return {{"language", language_name(s.language())}, {"text", s.text()}};
}

inline KernelSource source_from_json(const json& j,
                                     const std::string& context = "source") {
  auto lang =
      language_from_name(detail::get<std::string>(j, "language", context));
  if (!lang) throw SchemaError(context + ": unknown language");
  return {*lang, detail::get<std::string>(j, "text", context)};
}

inline json to_json(const CodeRegion& r) {
  json j = {{"start_line", r.start_line()}, {"end_line", r.end_line()}};
  if (!r.label().empty()) j["label"] = r.label();
  return j;
}

inline CodeRegion region_from_json(const json& j,
                                   const std::string& context = "region") {
  return {detail::get<int>(j, "start_line", context),
          detail::get<int>(j, "end_line", context),
          j.value("label", std::string{})};
}

inline json to_json(const OptimizationAction& a) {
  json j = {{"kind", kind_name(a.kind())}};
  if (a.region()) j["region"] = to_json(*a.region());
  return j;
}

inline OptimizationAction action_from_json(
    const json& j, const std::string& context = "action") {
  auto kind = kind_from_name(detail::get<std::string>(j, "kind", context));
  if (!kind) throw SchemaError(context + ": unknown action kind");
  if (*kind == ActionKind::Stop) {
    if (j.contains("region"))
      throw SchemaError(context + ": stop action must not carry a region");
    return OptimizationAction::stop();
  }
  return {*kind, region_from_json(detail::field(j, "region", context),
                                  context + " region")};
}

inline json to_json(const ExecutionReport& r) {
  json j = {{"compile_ok", r.compile_ok()},
            {"correct", r.correct()},
            {"runtime_ms", r.runtime_ms()},
            {"baseline_ms", r.baseline_ms()}};
  if (r.error_text()) j["error_text"] = *r.error_text();
  return j;
}

inline ExecutionReport report_from_json(const json& j,
                                        const std::string& context = "report") {
  std::optional<std::string> err;
  if (j.contains("error_text") && !j["error_text"].is_null())
    err = detail::get<std::string>(j, "error_text", context);
  try {
    return {detail::get<bool>(j, "compile_ok", context),
            detail::get<bool>(j, "correct", context),
            detail::get_number(j, "runtime_ms", context),
            detail::get_number(j, "baseline_ms", context), std::move(err)};
  } catch (const ValidationError& e) {
    throw SchemaError(context + ": " + e.what());
  }
}

inline json to_json(const Observation& o) {
  json hist = json::array();
  for (const auto& h : o.history)
    hist.push_back({{"action", to_json(h.action)},
                    {"reward", h.reward},
                    {"outcome", h.outcome}});
  return {{"task", to_json(o.task)},
          {"current_source", to_json(o.current_source)},
          {"step_index", o.step_index},
          {"history", hist},
          {"hardware", to_json(o.hardware)}};
}

inline Observation observation_from_json(const json& j) {
  const std::string ctx = "observation";
  Observation o{task_from_json(detail::field(j, "task", ctx), ctx + " task"),
                source_from_json(detail::field(j, "current_source", ctx)),
                detail::get<int>(j, "step_index", ctx),
                {},
                hardware_from_json(detail::field(j, "hardware", ctx))};
  for (const auto& h : detail::field(j, "history", ctx))
    o.history.push_back({action_from_json(detail::field(h, "action", ctx)),
                         detail::get_number(h, "reward", ctx),
                         detail::get<std::string>(h, "outcome", ctx)});
  o.validate();
  return o;
}

// ---------------------------------------------------------------------------
// File loaders
// ---------------------------------------------------------------------------

inline json parse_json_file(const std::filesystem::path& path) {
  std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": malformed JSON: " + e.what());
  }
}

/// Reads a suite file: a JSON array of task records. Order is preserved.
inline std::vector<KernelTask> parse_task_suite(
    const std::filesystem::path& path) {
  json doc = parse_json_file(path);
  if (!doc.is_array())
    throw SchemaError(path.string() + ": suite file must be an array");
  std::vector<KernelTask> tasks;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    auto task = task_from_json(doc[i], "task[" + std::to_string(i) + "]");
    if (!seen.insert(task.task_id).second)
      throw SchemaError("task[" + std::to_string(i) +
                        "]: duplicate task_id '" + task.task_id + "'");
    tasks.push_back(std::move(task));
  }
  return tasks;
}

inline HardwareSpec parse_hardware_spec(const std::filesystem::path& path) {
  return hardware_from_json(parse_json_file(path), path.string());
}

}  // namespace hkopt

#endif  // HKOPT_CORE_MODEL_HPP_
