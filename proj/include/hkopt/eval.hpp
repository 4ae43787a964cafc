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

// Benchmark metrics and suite execution.

#ifndef HKOPT_EVAL_HPP_
#define HKOPT_EVAL_HPP_

#include <atomic>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "hkopt/core_model.hpp"
#include "hkopt/orchestrator.hpp"

namespace hkopt {

struct TaskResult {
  std::string task_id;
  bool compile_ok = false;
  bool correct = false;
  double speedup = 0;

  void validate() const {
    if (correct && !compile_ok)
      throw ValidationError("task result '" + task_id + "': correct without compile_ok");
    if (!correct && speedup != 0)
      throw ValidationError("task result '" + task_id + "': speedup without correctness");
    if (!(speedup >= 0))
      throw ValidationError("task result '" + task_id + "': negative speedup");
  }

  bool operator==(const TaskResult&) const = default;
};

inline json to_json(const TaskResult& r) {
  return {{"task_id", r.task_id},
          {"compile_ok", r.compile_ok},
          {"correct", r.correct},
          {"speedup", r.speedup}};
}

inline TaskResult task_result_from_json(const json& j) {
  TaskResult r{detail::get<std::string>(j, "task_id", "task result"),
               detail::get<bool>(j, "compile_ok", "task result"),
               detail::get<bool>(j, "correct", "task result"),
               detail::get_number(j, "speedup", "task result")};
  r.validate();
  return r;
}

/// Outcome of one task. A requested translation that never verified leaves
/// no generated kernel, so the task counts as incorrect.
inline TaskResult task_result(const OptimizationResult& r) {
  if (r.translation_requested && !r.translation_ok) {
    bool compiled = !r.steps.empty() && r.steps.front().report.compile_ok();
    return {r.task_id, compiled, false, 0.0};
  }
  return {r.task_id, r.final_report.compile_ok(), r.final_report.correct(),
          r.final_report.correct() ? r.best_speedup : 0.0};
}

inline void require_results(const std::vector<TaskResult>& results) {
  if (results.empty()) throw PreconditionError("metrics need at least one task result");
}

/// Fraction of tasks that are correct with speedup strictly above p.
inline double fast_p(const std::vector<TaskResult>& results, double p) {
  require_results(results);
  if (p < 0) throw PreconditionError("fast_p: p must be >= 0");
  std::size_t hits = 0;
  for (const auto& r : results) hits += r.correct && r.speedup > p;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

/// Arithmetic mean of speedups, counting incorrect tasks as zero.
inline double mean_speedup(const std::vector<TaskResult>& results) {
  require_results(results);
  double sum = 0;
  for (const auto& r : results) sum += r.correct ? r.speedup : 0.0;
  return sum / static_cast<double>(results.size());
}

struct Accuracies {
  double call = 0;
  double execute = 0;
};

inline Accuracies accuracies(const std::vector<TaskResult>& results) {
  require_results(results);
  std::size_t compiled = 0, correct = 0;
  for (const auto& r : results) {
    compiled += r.compile_ok;
    correct += r.correct;
  }
  const double n = static_cast<double>(results.size());
  return {static_cast<double>(compiled) / n, static_cast<double>(correct) / n};
}

struct MetricsReport {
  std::string suite;
  std::size_t n = 0;
  double call_accuracy = 0;
  double execute_accuracy = 0;
  std::vector<std::pair<double, double>> fast;  // (p, fraction), ascending p
  double mean_speedup = 0;
  Tolerance tolerance;
  std::vector<TaskResult> per_task;
};

inline MetricsReport make_report(std::string suite, std::vector<TaskResult> results,
                                 std::vector<double> ps = {1.0, 2.0},
                                 Tolerance tolerance = {}) {
  require_results(results);
  for (const auto& r : results) r.validate();
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  MetricsReport m;
  m.suite = std::move(suite);
  m.n = results.size();
  const auto acc = accuracies(results);
  m.call_accuracy = acc.call;
  m.execute_accuracy = acc.execute;
  for (double p : ps) m.fast.emplace_back(p, fast_p(results, p));
  m.mean_speedup = mean_speedup(results);
  m.tolerance = tolerance;
  m.per_task = std::move(results);
  return m;
}

/// Shortest decimal text for a threshold: 1, 2, 0.5.
inline std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

inline json to_json(const MetricsReport& m) {
  json fast = json::object();
  for (const auto& [p, v] : m.fast) fast[format_p(p)] = v;
  json per = json::array();
  for (const auto& r : m.per_task) per.push_back(to_json(r));
  return {{"suite", m.suite},
          {"N", m.n},
          {"call_accuracy", m.call_accuracy},
          {"execute_accuracy", m.execute_accuracy},
          {"fast", fast},
          {"mean_speedup", m.mean_speedup},
          {"tolerance", {{"atol", m.tolerance.atol}, {"rtol", m.tolerance.rtol}}},
          {"per_task", per}};
}

/// Text table in the layout of the published result tables.
inline std::string render_table(const MetricsReport& m) {
  auto pct = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.1f%%", 100.0 * v);
    return std::string(b);
  };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  auto row = [](const std::vector<std::string>& cells, const std::vector<int>& widths) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::string c = cells[i];
      if (static_cast<int>(c.size()) < widths[i]) c.append(widths[i] - c.size(), ' ');
      line += (i ? "  " : "") + c;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    return line + "\n";
  };

  std::vector<std::string> head{"Suite", "N", "Call Acc", "Exec Acc"};
  std::vector<std::string> vals{m.suite, std::to_string(m.n), pct(m.call_accuracy),
                                pct(m.execute_accuracy)};
  for (const auto& [p, v] : m.fast) {
    head.push_back("fast_" + format_p(p));
    vals.push_back(pct(v));
  }
  head.push_back("Mean Speedup");
  vals.push_back(num(m.mean_speedup));
  std::vector<int> w;
  for (std::size_t i = 0; i < head.size(); ++i)
    w.push_back(static_cast<int>(std::max(head[i].size(), vals[i].size())));

  std::string out = row(head, w) + row(vals, w);
  out += "\n";
  std::vector<std::string> th{"Task", "Compiled", "Correct", "Speedup"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : m.per_task)
    rows.push_back({r.task_id, r.compile_ok ? "yes" : "no", r.correct ? "yes" : "no",
                    num(r.speedup)});
  std::vector<int> tw;
  for (std::size_t i = 0; i < th.size(); ++i) {
    std::size_t width = th[i].size();
    for (const auto& r : rows) width = std::max(width, r[i].size());
    tw.push_back(static_cast<int>(width));
  }
  out += row(th, tw);
  for (const auto& r : rows) out += row(r, tw);
  out += "tolerance: atol=" + format_p(m.tolerance.atol) +
         " rtol=" + format_p(m.tolerance.rtol) + "\n";
  return out;
}

/// Suite label: the shared suite of every task, else MIXED.
inline std::string suite_label(const std::vector<KernelTask>& tasks) {
  if (tasks.empty()) return "EMPTY";
  for (const auto& t : tasks)
    if (t.suite != tasks.front().suite) return "MIXED";
  return std::string(suite_name(tasks.front().suite));
}

struct BenchmarkRun {
  MetricsReport report;
  std::vector<std::optional<OptimizationResult>> results;  // suite order
  std::vector<std::string> errors;                         // suite order, "" if none
};

/// Optimizes every task on at most `parallelism` worker threads. A task
/// that throws is recorded as failed without stopping the suite.
inline BenchmarkRun run_benchmark(const std::vector<KernelTask>& suite,
                                  const OptimizeContext& ctx,
                                  const InferenceConfig& cfg, int parallelism = 1,
                                  std::vector<double> ps = {1.0, 2.0}) {
  if (suite.empty()) throw PreconditionError("run_benchmark: empty suite");
  BenchmarkRun run;
  run.results.resize(suite.size());
  run.errors.resize(suite.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < suite.size(); i = next++) {
      try {
        run.results[i] = optimize(suite[i], ctx, cfg);
      } catch (const std::exception& e) {
        run.errors[i] = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(parallelism, static_cast<int>(suite.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<TaskResult> results;
  for (std::size_t i = 0; i < suite.size(); ++i)
    results.push_back(run.results[i] ? task_result(*run.results[i])
                                     : TaskResult{suite[i].task_id, false, false, 0.0});
  run.report = make_report(suite_label(suite), std::move(results), std::move(ps),
                           cfg.tolerance);
  return run;
}

}  // namespace hkopt

#endif  // HKOPT_EVAL_HPP_
