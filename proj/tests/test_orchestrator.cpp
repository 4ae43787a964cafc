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

#include <catch_amalgamated.hpp>

#include <atomic>

#include "hkopt/eval.hpp"
#include "hkopt/orchestrator.hpp"
#include "hkopt/ppo.hpp"
#include "test_support.hpp"

namespace hkopt {
namespace {

struct Fixture {
  std::vector<KernelTask> suite = parse_task_suite(data_path("suites/mini_suite.json"));
  HardwareSpec hardware = parse_hardware_spec(data_path("hardware/h100.json"));
  ExampleBank bank = load_example_bank(data_path("example_bank"));
  MockRunner runner{cost_table_from_json(parse_json_file(data_path("mock/cost_table.json")))};
  ScriptedCoder coder = load_scripted_coder(data_path("mock/coder_script.json"));
  FeaturizedPolicy policy;

  Fixture() { load_checkpoint(parse_json_file(data_path("mock/policy.json")), policy); }

  const KernelTask& task(const std::string& id) const {
    for (const auto& t : suite)
      if (t.task_id == id) return t;
    throw std::runtime_error("no task " + id);
  }
  OptimizeContext ctx(CoderClient* c = nullptr, PolicyBackend* p = nullptr,
                      RunnerClient* r = nullptr) {
    return {p ? *p : policy, c ? *c : coder, r ? *r : runner, bank, hardware};
  }
};

// Prefers one kind everywhere; everything else scores zero.
class KindPolicy : public PolicyBackend {
 public:
  explicit KindPolicy(ActionKind k) : kind_(k) {}
  std::vector<double> logits(const Observation&, const ActionCatalog& c) override {
    std::vector<double> l;
    for (const auto& a : c.actions()) l.push_back(a.kind() == kind_ ? 5.0 : 0.0);
    return l;
  }
  [[nodiscard]] std::string name() const override { return "kind"; }

 private:
  ActionKind kind_;
};

class BrokenPolicy : public PolicyBackend {
 public:
  std::vector<double> logits(const Observation&, const ActionCatalog&) override {
    throw BackendError("endpoint returned 503");
  }
  [[nodiscard]] std::string name() const override { return "broken"; }
};

class FlakyCoder : public CoderClient {
 public:
  explicit FlakyCoder(int failures) : failures_(failures) {}
  std::string complete(const std::string& prompt) override {
    ++calls;
    if (failures_-- > 0) throw TransportError("connection reset");
    return inner_.complete(prompt);
  }
  int calls = 0;

 private:
  int failures_;
  IdentityCoder inner_;
};

class RecordingCoder : public CoderClient {
 public:
  explicit RecordingCoder(CoderClient& inner) : inner_(inner) {}
  std::string complete(const std::string& prompt) override {
    prompts.push_back(prompt);
    return inner_.complete(prompt);
  }
  std::vector<std::string> prompts;

 private:
  CoderClient& inner_;
};

void check_safety(const OptimizationResult& r) {
  REQUIRE(r.final_report.correct());
  double current = r.baseline_ms;
  for (const auto& s : r.steps) {
    if (!s.accepted) continue;
    REQUIRE(s.report.correct());
    if (s.translation) {
      current = s.report.runtime_ms();
      continue;
    }
    REQUIRE(s.report.runtime_ms() < current);
    current = s.report.runtime_ms();
  }
  REQUIRE(r.final_report.runtime_ms() == current);
}

TEST_CASE("extract_code takes the last complete fenced block") {
  auto k = extract_code("text\n```python\na = 1\n```\nmore\n```\nb = 2\n```\n");
  CHECK(k.text() == "b = 2\n");
  CHECK(k.language() == Language::KernelDsl);
  CHECK(extract_code("```\nx = f(y)\n```\n```python\nunterminated\n").text() ==
        "x = f(y)\n");
  CHECK_THROWS_AS(extract_code("no code here"), ExtractionError);
  CHECK_THROWS_AS(extract_code("```python\n\n  \n```\n"), ExtractionError);
  CHECK_THROWS_AS(extract_code("```python\na = 1\n"), ExtractionError);
}

TEST_CASE("example bank ships examples for every optimization kind") {
  const auto bank = load_example_bank(data_path("example_bank"));
  for (auto k : kOptimizationKinds) CHECK(bank.examples(k).size() >= 2);
  CHECK_THROWS_AS(load_example_bank(data_path("no_such_bank")), ConfigError);
}

TEST_CASE("build_prompt holds the three elements in order") {
  std::map<ActionKind, std::vector<std::string>> ex;
  for (int i = 0; i < 5; ++i) ex[ActionKind::Tiling].push_back("tiling example " + std::to_string(i));
  const ExampleBank bank(ex);
  const KernelSource prev(Language::KernelDsl, "a = f(x)\nb = g(a)\n");
  const OptimizationAction tile(ActionKind::Tiling, CodeRegion(1, 1));

  auto b = build_prompt(prev, tile, bank, 3);
  CHECK(b.examples.size() == 3);
  CHECK(b.examples.front() == "tiling example 0");
  CHECK(prompt_is_complete(b));
  CHECK(prompt_kernel(b.assembled) == prev.text());
  CHECK(b.assembled.find("tiling example 3") == std::string::npos);
  CHECK(build_prompt(prev, tile, bank, 10).examples.size() == 5);

  auto fb = build_prompt(prev, tile, bank, 2, std::string("mock: out of registers"));
  CHECK(prompt_is_complete(fb));
  CHECK(fb.assembled.find("mock: out of registers") != std::string::npos);

  PromptBundle swapped = b;
  swapped.examples = {b.examples[1], b.examples[0]};
  CHECK_FALSE(prompt_is_complete(swapped));

  CHECK_THROWS_AS(build_prompt(prev, OptimizationAction::stop(), bank), PreconditionError);
  CHECK_THROWS_AS(build_prompt(prev, OptimizationAction(ActionKind::Fusion, CodeRegion(1, 2)),
                               bank),
                  ConfigError);
}

TEST_CASE("scripted coder expands the prompt kernel") {
  ScriptedCoder c(std::vector<ScriptedCoder::Rule>{{{"needle"}, "```\n# edited\n{{kernel}}\n```\n"}});
  const std::string p = "x\n<kernel>\na = 1\n</kernel>\nneedle\n";
  CHECK(c.complete(p) == "```\n# edited\na = 1\n```\n");
  CHECK(c.complete("<kernel>\nb = 2\n</kernel>\n") == "```python\nb = 2\n```\n");
  CHECK(IdentityCoder().complete(p) == fenced("a = 1\n"));
}

TEST_CASE("improving trace keeps every faster kernel") {
  Fixture f;
  auto r = optimize(f.task("t2"), f.ctx(), InferenceConfig{});
  check_safety(r);
  REQUIRE(r.steps.size() == 3);
  CHECK(r.steps[0].translation);
  CHECK(r.steps[1].accepted);
  CHECK(r.steps[2].accepted);
  CHECK(r.final_report.runtime_ms() == Catch::Approx(0.4));
  CHECK(r.best_speedup == Catch::Approx(2.5));
  CHECK(r.coder_calls == 3);
  CHECK(task_result(r) == TaskResult{"t2", true, true, r.best_speedup});
}

TEST_CASE("compile failure is rejected and the previous kernel kept") {
  Fixture f;
  auto r = optimize(f.task("t1"), f.ctx(), InferenceConfig{});
  check_safety(r);
  REQUIRE(r.steps.size() == 3);
  const auto& bad = r.steps[2];
  CHECK_FALSE(bad.accepted);
  CHECK_FALSE(bad.report.compile_ok());
  CHECK(r.final_source.text().find("# hk: fused") != std::string::npos);
  CHECK(r.final_source.text().find("# hk: tiled") == std::string::npos);
  CHECK(r.best_speedup == Catch::Approx(2.0));
}

TEST_CASE("incorrect translation leaves the reference in place") {
  Fixture f;
  auto r = optimize(f.task("t3"), f.ctx(), InferenceConfig{});
  check_safety(r);
  CHECK_FALSE(r.translation_ok);
  CHECK(r.steps[0].report.compile_ok());
  CHECK_FALSE(r.steps[0].report.correct());
  CHECK(r.final_source.language() == Language::Reference);
  CHECK(task_result(r) == TaskResult{"t3", true, false, 0.0});
}

TEST_CASE("identity coder never changes the kernel") {
  Fixture f;
  IdentityCoder id;
  for (const auto& t : f.suite) {
    InferenceConfig cfg;
    cfg.translate = false;
    auto r = optimize(t, f.ctx(&id), cfg);
    check_safety(r);
    CHECK(r.final_source.text() == t.reference_source);
    CHECK(r.best_speedup == Catch::Approx(1.0));
    for (const auto& s : r.steps) CHECK_FALSE(s.accepted);
  }
}

TEST_CASE("every optimization prompt satisfies the three-element layout") {
  Fixture f;
  for (const auto& t : f.suite) {
    RecordingCoder rec(f.coder);
    auto r = optimize(t, f.ctx(&rec), InferenceConfig{});
    REQUIRE(rec.prompts.size() == static_cast<std::size_t>(r.coder_calls));
    KernelSource current(Language::Reference, t.reference_source);
    for (const auto& s : r.steps) {
      if (!s.translation) {
        auto b = build_prompt(current, *s.action, f.bank, 3);
        b.assembled = s.prompt;
        CHECK(prompt_is_complete(b));
      }
      if (s.accepted) current = KernelSource(Language::KernelDsl, *s.candidate_source);
    }
  }
}

TEST_CASE("rejection feedback reaches the next attempt at the same action") {
  Fixture f;
  KindPolicy tile(ActionKind::Tiling);
  RecordingCoder rec(f.coder);
  InferenceConfig cfg;
  cfg.max_steps = 4;
  auto r = optimize(f.task("t1"), f.ctx(&rec, &tile), cfg);
  REQUIRE(rec.prompts.size() == 4);
  const std::string err = "shared memory request";
  CHECK(rec.prompts[1].find(err) == std::string::npos);
  CHECK(rec.prompts[2].find(err) != std::string::npos);
  CHECK(rec.prompts[2].find("was rejected") != std::string::npos);
  check_safety(r);
}

TEST_CASE("max_steps bounds coder calls") {
  Fixture f;
  KindPolicy tile(ActionKind::Tiling);
  for (int n : {0, 1, 2, 5}) {
    InferenceConfig cfg;
    cfg.max_steps = n;
    RecordingCoder rec(f.coder);
    auto r = optimize(f.task("t4"), f.ctx(&rec, &tile), cfg);
    CHECK(r.coder_calls == n);
    CHECK(rec.prompts.size() == static_cast<std::size_t>(n));
  }
  InferenceConfig zero;
  zero.max_steps = 0;
  auto r = optimize(f.task("t1"), f.ctx(), zero);
  CHECK(r.steps.empty());
  CHECK(r.final_source.text() == f.task("t1").reference_source);
  CHECK(r.final_report.correct());
  CHECK(task_result(r) == TaskResult{"t1", true, true, 1.0});
}

TEST_CASE("unverifiable reference is a precondition failure") {
  Fixture f;
  auto t = f.task("t1");
  t.reference_source = "def nothing_known():\n    pass\n";
  CHECK_THROWS_AS(optimize(t, f.ctx(), InferenceConfig{}), PreconditionError);
}

TEST_CASE("transport errors are retried inside one coder call") {
  Fixture f;
  InferenceConfig cfg;
  cfg.translate = false;
  cfg.max_steps = 1;
  cfg.retries = 2;
  KindPolicy tile(ActionKind::Tiling);

  FlakyCoder recovers(2);
  auto r = optimize(f.task("t4"), f.ctx(&recovers, &tile), cfg);
  CHECK(recovers.calls == 3);
  CHECK(r.coder_calls == 1);
  CHECK(r.steps[0].report.correct());

  FlakyCoder dead(100);
  auto d = optimize(f.task("t4"), f.ctx(&dead, &tile), cfg);
  CHECK(dead.calls == 3);
  CHECK_FALSE(d.steps[0].report.compile_ok());
  CHECK(d.steps[0].report.error_text()->find("coder unreachable") != std::string::npos);
  check_safety(d);
}

TEST_CASE("policy failure stops the loop unless uniform fallback is enabled") {
  Fixture f;
  BrokenPolicy broken;
  InferenceConfig cfg;
  cfg.translate = false;
  cfg.max_steps = 3;
  auto r = optimize(f.task("t4"), f.ctx(nullptr, &broken), cfg);
  CHECK(r.steps.empty());
  CHECK(r.final_report.correct());

  cfg.uniform_fallback = true;
  auto u = optimize(f.task("t4"), f.ctx(nullptr, &broken), cfg);
  CHECK(u.coder_calls > 0);
  check_safety(u);
}

TEST_CASE("sampling is reproducible per seed") {
  Fixture f;
  FeaturizedPolicy flat;
  InferenceConfig cfg;
  cfg.sample = true;
  cfg.seed = 11;
  auto a = optimize(f.task("t2"), f.ctx(nullptr, &flat), cfg);
  auto b = optimize(f.task("t2"), f.ctx(nullptr, &flat), cfg);
  CHECK(episode_log(a) == episode_log(b));
  check_safety(a);
}

TEST_CASE("episode log has one record per coder call") {
  Fixture f;
  auto r = optimize(f.task("t1"), f.ctx(), InferenceConfig{});
  const auto log = episode_log(r);
  const auto lines = split_lines(log);
  REQUIRE(lines.size() == 3);
  auto first = json::parse(lines[0]);
  CHECK(first["phase"] == "translate");
  CHECK(first["prompt_hash"] == sha256_hex(first["prompt"].get<std::string>()));
  CHECK(json::parse(lines[1])["action_text"] == "fuse lines 3-4");
}

TEST_CASE("parallel benchmark matches the sequential one") {
  Fixture f;
  auto seq = run_benchmark(f.suite, f.ctx(), InferenceConfig{}, 1);
  auto par = run_benchmark(f.suite, f.ctx(), InferenceConfig{}, 4);
  CHECK(to_json(seq.report) == to_json(par.report));
  for (std::size_t i = 0; i < f.suite.size(); ++i)
    CHECK(episode_log(*seq.results[i]) == episode_log(*par.results[i]));
}

TEST_CASE("a task that throws is recorded as failed") {
  Fixture f;
  auto suite = f.suite;
  suite[0].reference_source = "def unknown():\n    pass\n";
  auto run = run_benchmark(suite, f.ctx(), InferenceConfig{}, 2);
  CHECK_FALSE(run.results[0]);
  CHECK_FALSE(run.errors[0].empty());
  CHECK(run.report.per_task[0] == TaskResult{suite[0].task_id, false, false, 0.0});
  CHECK(run.report.n == suite.size());
}

}  // namespace
}  // namespace hkopt
