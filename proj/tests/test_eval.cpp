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

#include "hkopt/eval.hpp"
#include "oracles.hpp"

namespace hkopt {
namespace {

TaskResult ok(double s) { return {"t", true, true, s}; }
TaskResult incorrect() { return {"t", true, false, 0.0}; }
TaskResult broken() { return {"t", false, false, 0.0}; }

const std::vector<TaskResult> kFour{ok(1.5), ok(0.8), incorrect(), ok(2.5)};

TEST_CASE("fast_p counts correct tasks strictly above p") {
  CHECK(fast_p(kFour, 1.0) == 0.5);
  CHECK(fast_p(kFour, 2.0) == 0.25);
  CHECK(fast_p({ok(2.0)}, 2.0) == 0.0);
  CHECK(fast_p({ok(2.0)}, 1.999) == 1.0);
  for (double p : {0.0, 1.0, 2.0, 10.0}) CHECK(fast_p({incorrect(), broken()}, p) == 0.0);
  CHECK_THROWS_AS(fast_p({}, 1.0), PreconditionError);
  CHECK_THROWS_AS(fast_p(kFour, -1.0), PreconditionError);
}

TEST_CASE("mean speedup counts incorrect tasks as zero") {
  CHECK(mean_speedup({ok(2.0), ok(1.0)}) == 1.5);
  CHECK(mean_speedup({incorrect(), incorrect(), broken(), incorrect()}) == 0.0);
  CHECK(mean_speedup(kFour) == Catch::Approx(1.2).epsilon(1e-15));
  CHECK_THROWS_AS(mean_speedup({}), PreconditionError);
}

TEST_CASE("accuracies") {
  auto a = accuracies({incorrect(), ok(1.0)});
  CHECK(a.call == 1.0);
  CHECK(a.execute == 0.5);
  auto all = accuracies({ok(1.0), ok(3.0)});
  CHECK(all.call == 1.0);
  CHECK(all.execute == 1.0);
  CHECK_THROWS_AS(accuracies({}), PreconditionError);
}

TEST_CASE("task result invariants") {
  CHECK_THROWS_AS((TaskResult{"x", false, true, 1.0}.validate()), ValidationError);
  CHECK_THROWS_AS((TaskResult{"x", true, false, 1.0}.validate()), ValidationError);
  CHECK_THROWS_AS((TaskResult{"x", true, true, -1.0}.validate()), ValidationError);
  const TaskResult r{"x", true, true, 1.25};
  CHECK(task_result_from_json(to_json(r)) == r);
  CHECK_THROWS_AS(make_report("s", {TaskResult{"x", false, true, 1.0}}), ValidationError);
}

TEST_CASE("metrics agree with a recount and respect the bounds chain") {
  Rng rng(2024);
  const std::vector<double> ps{0.0, 0.5, 1.0, 1.5, 2.0, 3.0};
  for (int trial = 0; trial < 300; ++trial) {
    const auto rs = oracle::random_results(rng, 1 + rng.index(60));
    const auto c = oracle::recount(rs, ps);
    const auto a = accuracies(rs);
    CHECK(std::abs(a.call - c.call) <= 1e-12);
    CHECK(std::abs(a.execute - c.execute) <= 1e-12);
    CHECK(std::abs(mean_speedup(rs) - c.mean) <= 1e-12);
    double prev = 1.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const double f = fast_p(rs, ps[i]);
      CHECK(std::abs(f - c.fast[i]) <= 1e-12);
      CHECK(f <= prev);
      CHECK(f <= a.execute);
      prev = f;
    }
    CHECK(a.execute <= a.call);
    CHECK(a.call <= 1.0);
  }
}

TEST_CASE("report defaults to p in {1, 2} and carries the tolerance") {
  auto m = make_report("KB-L1", kFour);
  REQUIRE(m.fast.size() == 2);
  CHECK(m.fast[0] == std::make_pair(1.0, 0.5));
  CHECK(m.fast[1] == std::make_pair(2.0, 0.25));
  auto j = to_json(m);
  CHECK(j["fast"].size() == 2);
  CHECK(j["fast"]["1"] == 0.5);
  CHECK(j["fast"]["2"] == 0.25);
  CHECK(j["N"] == 4);
  CHECK(j["tolerance"]["atol"] == 1e-2);

  auto extra = make_report("KB-L1", kFour, {2.0, 0.5, 1.0, 2.0}, Tolerance{1e-3, 5e-3});
  REQUIRE(extra.fast.size() == 3);
  CHECK(extra.fast[0].first == 0.5);
  CHECK(to_json(extra)["fast"].contains("0.5"));
  CHECK(to_json(extra)["tolerance"]["rtol"] == 5e-3);
}

TEST_CASE("rendered table") {
  auto m = make_report("KB-L1", kFour);
  const std::string expected =
      "Suite  N  Call Acc  Exec Acc  fast_1  fast_2  Mean Speedup\n"
      "KB-L1  4  100.0%    75.0%     50.0%   25.0%   1.20\n"
      "\n"
      "Task  Compiled  Correct  Speedup\n"
      "t     yes       yes      1.50\n"
      "t     yes       yes      0.80\n"
      "t     yes       no       0.00\n"
      "t     yes       yes      2.50\n"
      "tolerance: atol=0.01 rtol=0.01\n";
  CHECK(render_table(m) == expected);
}

TEST_CASE("suite label") {
  KernelTask a = random_task_fixed(), b = random_task_fixed();
  a.suite = b.suite = Suite::KbL2;
  CHECK(suite_label({a, b}) == "KB-L2");
  b.suite = Suite::KbL1;
  CHECK(suite_label({a, b}) == "MIXED");
}

TEST_CASE("failed translation counts as incorrect") {
  OptimizationResult r{"x", 1.0, true, false,
                       KernelSource(Language::Reference, "a = f(x)\n"),
                       ExecutionReport(true, true, 1.0, 1.0, std::nullopt), {}, 1.0, 1};
  OptimizationStep s{0, true, std::nullopt, std::string("k"),
                     ExecutionReport(true, false, 0.0, 1.0, std::string("mismatch"))};
  r.steps.push_back(s);
  CHECK(task_result(r) == TaskResult{"x", true, false, 0.0});
  r.steps[0].report = ExecutionReport::compile_failure("syntax", 1.0);
  CHECK(task_result(r) == TaskResult{"x", false, false, 0.0});
  r.translation_requested = false;
  CHECK(task_result(r) == TaskResult{"x", true, true, 1.0});
}

}  // namespace
}  // namespace hkopt
