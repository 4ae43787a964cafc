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

#include <sys/wait.h>

#include <cstdlib>
#include <regex>

#include "hkopt/offline_env.hpp"
#include "test_support.hpp"

namespace hkopt {
namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

Run hkopt_cli(const TempDir& tmp, const std::string& args) {
  const auto out = tmp.path() / "stdout.txt";
  const auto err = tmp.path() / "stderr.txt";
  const std::string cmd = quote(HKOPT_CLI) + " " + args + " >" + quote(out.string()) +
                          " 2>" + quote(err.string());
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::string mock_config() { return quote(data_path("mock/config.json").string()); }

double number_after(const std::string& text, const std::string& label) {
  std::smatch m;
  const std::regex re(label + ": ([-0-9.]+)");
  REQUIRE(std::regex_search(text, m, re));
  return std::stod(m[1]);
}

std::filesystem::path write_config(const TempDir& tmp, json j) {
  return tmp.write("config.json", j.dump(2));
}

// The mock config with every relative path made absolute, for copies that
// live in a scratch directory.
json absolute_mock_config() {
  const auto dir = data_path("mock");
  auto j = parse_json_file(dir / "config.json");
  auto fix = [&](json& v) { v = (dir / v.get<std::string>()).lexically_normal().string(); };
  for (auto& [k, v] : j["paths"].items()) fix(v);
  fix(j["policy"]["checkpoint"]);
  fix(j["coder"]["script"]);
  fix(j["runner"]["cost_table"]);
  return j;
}

TEST_CASE("gen-env is deterministic and produces loadable trees") {
  TempDir tmp;
  const auto a = tmp.path() / "a", b = tmp.path() / "b";
  REQUIRE(hkopt_cli(tmp, "--seed 7 gen-env --depth 3 --branching 3 --count 2 --out " +
                             quote(a.string())).status == 0);
  REQUIRE(hkopt_cli(tmp, "--seed 7 gen-env --depth 3 --branching 3 --count 2 --out " +
                             quote(b.string())).status == 0);
  for (const char* name : {"synthetic-7.tree", "synthetic-8.tree"}) {
    CHECK(read_file(a / name) == read_file(b / name));
    CHECK_NOTHROW(load_tree(a / name));
  }
  CHECK(read_file(a / "synthetic-7.tree") != read_file(a / "synthetic-8.tree"));

  const auto d1 = tmp.path() / "d1";
  REQUIRE(hkopt_cli(tmp, "--seed 3 gen-env --depth 1 --branching 4 --out " +
                             quote(d1.string())).status == 0);
  const auto tree = load_tree(d1 / "synthetic-3.tree");
  CHECK(tree.size() == 5);
  CHECK(tree.children(tree.root_id()).size() == 4);
  CHECK(tree.depth() == 1);
}

TEST_CASE("train reaches the optimum on the synthetic environment") {
  TempDir tmp;
  const auto env = tmp.path() / "env";
  REQUIRE(hkopt_cli(tmp, "--seed 7 gen-env --depth 3 --branching 3 --out " +
                             quote(env.string())).status == 0);
  const auto cfg = write_config(
      tmp, {{"paths", {{"env_dataset", env.string()},
                       {"hardware", data_path("hardware/h100.json").string()}}}});
  auto r = hkopt_cli(tmp, "--config " + quote(cfg.string()) + " --seed 7 train --out " +
                              quote((tmp.path() / "out").string()));
  REQUIRE(r.status == 0);
  const double final_return = number_after(r.out, "final mean return");
  const double optimum = number_after(r.out, "optimal mean return");
  CHECK(final_return >= 0.9 * optimum);
  CHECK(std::filesystem::exists(tmp.path() / "out" / "policy.json"));
  CHECK(split_lines(read_file(tmp.path() / "out" / "train_log.jsonl")).size() == 500);
}

TEST_CASE("train logs are byte-identical across runs") {
  TempDir tmp;
  const auto cfg = write_config(
      tmp, {{"paths", {{"env_dataset", data_path("mini_env").string()},
                       {"hardware", data_path("hardware/h100.json").string()}}},
            {"trainer", {{"iterations", 25}, {"eval_episodes", 20}}}});
  const auto base = "--config " + quote(cfg.string()) + " --seed 5 train --out ";
  REQUIRE(hkopt_cli(tmp, base + quote((tmp.path() / "a").string())).status == 0);
  REQUIRE(hkopt_cli(tmp, base + quote((tmp.path() / "b").string())).status == 0);
  const auto la = read_file(tmp.path() / "a" / "train_log.jsonl");
  CHECK(la == read_file(tmp.path() / "b" / "train_log.jsonl"));
  CHECK(read_file(tmp.path() / "a" / "policy.json") ==
        read_file(tmp.path() / "b" / "policy.json"));
  REQUIRE(hkopt_cli(tmp, "--config " + quote(cfg.string()) + " --seed 6 train --out " +
                             quote((tmp.path() / "c").string())).status == 0);
  CHECK(la != read_file(tmp.path() / "c" / "train_log.jsonl"));
}

TEST_CASE("train with a missing dataset is a usage error naming the path") {
  TempDir tmp;
  const auto missing = (tmp.path() / "no-such-dataset").string();
  const auto cfg = write_config(
      tmp, {{"paths", {{"env_dataset", missing},
                       {"hardware", data_path("hardware/h100.json").string()}}}});
  auto r = hkopt_cli(tmp, "--config " + quote(cfg.string()) + " train --out " +
                              quote(tmp.path().string()));
  CHECK(r.status == 2);
  CHECK(r.err.find(missing) != std::string::npos);
}

TEST_CASE("optimize on the mock fixture matches the golden result") {
  TempDir tmp;
  auto r = hkopt_cli(tmp, "--config " + mock_config() + " --mock optimize --task t1 --out " +
                              quote(tmp.path().string()));
  REQUIRE(r.status == 0);
  CHECK(read_file(tmp.path() / "t1.result.json") == read_file(data_path("golden/t1.result.json")));
  CHECK(number_after(r.out, "best speedup") == 2.0);
  CHECK(split_lines(read_file(tmp.path() / "t1.episode.jsonl")).size() == 3);
}

TEST_CASE("optimize with an unknown task is a usage error") {
  TempDir tmp;
  auto r = hkopt_cli(tmp, "--config " + mock_config() + " --mock optimize --task nope --out " +
                              quote(tmp.path().string()));
  CHECK(r.status == 2);
  CHECK(r.err.find("nope") != std::string::npos);
}

TEST_CASE("optimize with zero steps returns the verified reference") {
  TempDir tmp;
  auto r = hkopt_cli(tmp, "--config " + mock_config() +
                              " --mock optimize --task t2 --max-steps 0 --out " +
                              quote(tmp.path().string()));
  REQUIRE(r.status == 0);
  auto j = json::parse(read_file(tmp.path() / "t2.result.json"));
  CHECK(j["coder_calls"] == 0);
  CHECK(j["steps"].empty());
  CHECK(j["final_report"]["correct"] == true);
  const auto suite = parse_json_file(data_path("suites/mini_suite.json"));
  CHECK(j["final_source"]["text"] == suite[1]["reference_source"]);
  CHECK(j["final_source"]["language"] == "REFERENCE");
  CHECK(read_file(tmp.path() / "t2.episode.jsonl").empty());
}

TEST_CASE("eval prints the golden table and writes the golden report") {
  TempDir tmp;
  auto r = hkopt_cli(tmp, "--config " + mock_config() + " --mock eval --out " +
                              quote(tmp.path().string()));
  REQUIRE(r.status == 0);
  CHECK(r.out == read_file(data_path("golden/report.txt")));
  CHECK(read_file(tmp.path() / "report.json") == read_file(data_path("golden/report.json")));
  for (const char* t : {"t1", "t2", "t3", "t4", "t5"})
    CHECK(std::filesystem::exists(tmp.path() / (std::string(t) + ".episode.jsonl")));
}

TEST_CASE("eval with an empty suite is a usage error") {
  TempDir tmp;
  const auto empty = tmp.write("empty.json", "[]");
  auto r = hkopt_cli(tmp, "--config " + mock_config() + " --mock eval --suite " +
                              quote(empty.string()) + " --out " + quote(tmp.path().string()));
  CHECK(r.status == 2);
}

TEST_CASE("eval reports the configured tolerance") {
  TempDir tmp;
  auto j = absolute_mock_config();
  j["tolerance"] = {{"atol", 0.003}, {"rtol", 0.0005}};
  const auto cfg = write_config(tmp, j);
  auto r = hkopt_cli(tmp, "--config " + quote(cfg.string()) + " --mock eval --out " +
                              quote(tmp.path().string()));
  REQUIRE(r.status == 0);
  auto rep = json::parse(read_file(tmp.path() / "report.json"));
  CHECK(rep["tolerance"]["atol"] == 0.003);
  CHECK(rep["tolerance"]["rtol"] == 0.0005);
  CHECK(r.out.find("atol=0.003 rtol=0.0005") != std::string::npos);
}

TEST_CASE("mock mode replaces the http coder") {
  TempDir tmp;
  auto j = absolute_mock_config();
  j["coder"] = {{"kind", "http"},
                {"endpoint", {{"base_url", "http://127.0.0.1:1/v1"},
                              {"model", "m"}, {"api_key_env", "HKOPT_UNSET_KEY_FOR_TEST"}}}};
  const auto path = write_config(tmp, j);
  auto r = hkopt_cli(tmp, "--config " + quote(path.string()) +
                              " --mock optimize --task t4 --out " + quote(tmp.path().string()));
  CHECK(r.status == 0);
}

TEST_CASE("config and usage errors exit with status 2") {
  TempDir tmp;
  CHECK(hkopt_cli(tmp, "").status == 2);
  CHECK(hkopt_cli(tmp, "frobnicate").status == 2);
  CHECK(hkopt_cli(tmp, "--config " + quote((tmp.path() / "absent.json").string()) +
                           " eval").status == 2);
  const auto bad = tmp.write("bad.json", "{ not json");
  CHECK(hkopt_cli(tmp, "--config " + quote(bad.string()) + " eval").status == 2);
  const auto wrong = tmp.write("wrong.json", R"({"runner": {"mode": "gpu"}})");
  CHECK(hkopt_cli(tmp, "--config " + quote(wrong.string()) + " eval").status == 2);
  CHECK(hkopt_cli(tmp, "--config " + mock_config() + " optimize").status == 2);
  CHECK(hkopt_cli(tmp, "gen-env --depth 0 --out " + quote(tmp.path().string())).status == 2);
}

TEST_CASE("an unverifiable reference is a runtime failure") {
  TempDir tmp;
  auto j = absolute_mock_config();
  json table = parse_json_file(data_path("mock/cost_table.json"));
  table["markers"] = json::array();
  j["runner"]["cost_table"] = tmp.write("table.json", table.dump()).string();
  const auto path = write_config(tmp, j);
  auto r = hkopt_cli(tmp, "--config " + quote(path.string()) +
                              " --mock optimize --task t1 --out " + quote(tmp.path().string()));
  CHECK(r.status == 3);
}

}  // namespace
}  // namespace hkopt
