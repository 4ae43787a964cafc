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

// hkopt: train a policy, optimize one task, evaluate a suite, or generate
// synthetic environment trees.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "hkopt/config.hpp"
#include "hkopt/eval.hpp"
#include "hkopt/orchestrator.hpp"
#include "hkopt/ppo.hpp"

namespace fs = std::filesystem;

namespace hkopt {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool mock = false;
};

RunConfig load_config(const GlobalFlags& g) {
  RunConfig c = g.config.empty() ? run_config_from_json(json::object(), fs::current_path())
                                 : load_run_config(g.config);
  if (g.seed) c.seed = *g.seed;
  return c;
}

fs::path output_dir(const std::optional<fs::path>& configured, const std::string& flag) {
  fs::path dir = !flag.empty() ? fs::path(flag) : configured.value_or("hkopt-out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Clients built from the config; --mock replaces every external boundary.
struct Clients {
  std::unique_ptr<PolicyBackend> policy;
  std::unique_ptr<CoderClient> coder;
  std::unique_ptr<RunnerClient> runner;
  ExampleBank bank;
  HardwareSpec hardware;
};

Clients make_clients(const RunConfig& c, bool mock) {
  Clients out;
  out.hardware = parse_hardware_spec(c.require(c.paths.hardware, "paths.hardware"));
  out.bank = load_example_bank(c.require(c.paths.example_bank, "paths.example_bank"));

  if (c.policy.backend == "remote" && !mock) {
    out.policy = std::make_unique<RemoteTextPolicy>(
        std::make_shared<HttpTextModelClient>(*c.policy.endpoint));
  } else {
    auto p = std::make_unique<FeaturizedPolicy>();
    if (c.policy.checkpoint)
      load_checkpoint(parse_json_file(c.require(c.policy.checkpoint, "policy.checkpoint")), *p);
    out.policy = std::move(p);
  }

  std::string coder_kind = c.coder.kind;
  if (mock && coder_kind == "http") coder_kind = c.coder.script ? "scripted" : "identity";
  if (coder_kind == "scripted")
    out.coder = std::make_unique<ScriptedCoder>(
        load_scripted_coder(c.require(c.coder.script, "coder.script")));
  else if (coder_kind == "http")
    out.coder = std::make_unique<HttpCoderClient>(*c.coder.endpoint);
  else
    out.coder = std::make_unique<IdentityCoder>();

  if (mock || c.runner.mode == "mock") {
    out.runner = std::make_unique<MockRunner>(
        cost_table_from_json(parse_json_file(c.require(c.runner.cost_table, "runner.cost_table"))));
  } else {
    if (c.runner.command.empty()) throw ConfigError("config: runner.command is not set");
    out.runner = std::make_unique<ProcessRunnerClient>(c.runner.command, c.runner.processes,
                                                       c.runner.timeout_s);
  }
  return out;
}

void write_episode_log(const fs::path& dir, const OptimizationResult& r) {
  write_file(dir / (r.task_id + ".episode.jsonl"), episode_log(r));
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string out;
};

int cmd_train(const GlobalFlags& g, const TrainFlags& f) {
  RunConfig c = load_config(g);
  const auto& dataset = c.require(c.paths.env_dataset, "paths.env_dataset");
  const auto hardware = parse_hardware_spec(c.require(c.paths.hardware, "paths.hardware"));
  std::vector<std::shared_ptr<const TrajectoryTree>> trees;
  try {
    trees = load_env_dataset(dataset);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  const fs::path ckpt_dir = output_dir(c.paths.checkpoints, f.out);
  const fs::path report_dir = output_dir(c.paths.reports, f.out);
  const auto env_cfg = c.env_config();

  std::string log;
  FeaturizedPolicy policy;
  train_policy(trees, hardware, env_cfg, c.trainer, policy, c.seed,
               [&](const TrainingLogRecord& r) { log += to_json(r).dump() + "\n"; });
  write_file(report_dir / "train_log.jsonl", log);
  write_file(ckpt_dir / "policy.json", checkpoint_json(policy, c.trainer).dump(2) + "\n");

  const int episodes = std::max(1, c.trainer.eval_episodes);
  const double final_return =
      evaluate_policy(trees, hardware, env_cfg, policy, episodes, c.seed + 1, false);
  double optimum = 0;
  for (int e = 0; e < episodes; ++e)
    optimum += optimal_return(*trees[static_cast<std::size_t>(e) % trees.size()], env_cfg);
  optimum /= episodes;
  std::cout << "trees: " << trees.size() << "\n"
            << "final mean return: " << fmt("%.6f", final_return) << "\n"
            << "optimal mean return: " << fmt("%.6f", optimum) << "\n"
            << "ratio: " << fmt("%.4f", optimum > 0 ? final_return / optimum : 0.0) << "\n";
  return kExitOk;
}

struct OptimizeFlags {
  std::string task;
  std::string out;
  std::optional<int> max_steps;
  bool uniform_fallback = false;
};

int cmd_optimize(const GlobalFlags& g, const OptimizeFlags& f) {
  RunConfig c = load_config(g);
  if (f.max_steps) {
    if (*f.max_steps < 0) throw ConfigError("--max-steps must be >= 0");
    c.max_steps = *f.max_steps;
  }
  if (f.uniform_fallback) c.inference.uniform_fallback = true;
  const auto tasks = parse_task_suite(c.require(c.paths.suite, "paths.suite"));
  auto it = std::find_if(tasks.begin(), tasks.end(),
                         [&](const KernelTask& t) { return t.task_id == f.task; });
  if (it == tasks.end())
    throw ConfigError("unknown task_id '" + f.task + "' in " + c.paths.suite->string());
  Clients k = make_clients(c, g.mock);
  const fs::path dir = output_dir(c.paths.reports, f.out);

  OptimizeContext ctx{*k.policy, *k.coder, *k.runner, k.bank, k.hardware};
  const auto result = optimize(*it, ctx, c.inference_config());
  write_file(dir / (result.task_id + ".result.json"), to_json(result).dump(2) + "\n");
  write_episode_log(dir, result);

  const auto tr = task_result(result);
  std::cout << "task: " << result.task_id << "\n"
            << "coder calls: " << result.coder_calls << "\n"
            << "compiled: " << (tr.compile_ok ? "yes" : "no") << "\n"
            << "correct: " << (tr.correct ? "yes" : "no") << "\n"
            << "best speedup: " << fmt("%.4f", tr.speedup) << "\n";
  return kExitOk;
}

struct EvalFlags {
  std::string out;
  std::string suite;
  std::optional<int> max_steps;
  bool uniform_fallback = false;
};

int cmd_eval(const GlobalFlags& g, const EvalFlags& f) {
  RunConfig c = load_config(g);
  if (!f.suite.empty()) c.paths.suite = fs::path(f.suite);
  if (f.max_steps) {
    if (*f.max_steps < 0) throw ConfigError("--max-steps must be >= 0");
    c.max_steps = *f.max_steps;
  }
  if (f.uniform_fallback) c.inference.uniform_fallback = true;
  const auto& suite_path = c.require(c.paths.suite, "paths.suite");
  const auto tasks = parse_task_suite(suite_path);
  if (tasks.empty()) throw ConfigError("suite has no tasks: " + suite_path.string());
  Clients k = make_clients(c, g.mock);
  const fs::path dir = output_dir(c.paths.reports, f.out);

  OptimizeContext ctx{*k.policy, *k.coder, *k.runner, k.bank, k.hardware};
  const auto run = run_benchmark(tasks, ctx, c.inference_config(), c.parallelism,
                                 c.inference.fast_p);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (run.results[i]) write_episode_log(dir, *run.results[i]);
    if (!run.errors[i].empty())
      std::cerr << "task " << tasks[i].task_id << " failed: " << run.errors[i] << "\n";
  }
  const std::string table = render_table(run.report);
  write_file(dir / "report.json", to_json(run.report).dump(2) + "\n");
  write_file(dir / "report.txt", table);
  std::cout << table;
  return kExitOk;
}

struct GenEnvFlags {
  std::optional<int> depth;
  std::optional<int> branching;
  std::optional<int> count;
  std::string out;
};

int cmd_gen_env(const GlobalFlags& g, const GenEnvFlags& f) {
  RunConfig c = load_config(g);
  const int depth = f.depth.value_or(c.gen_env.depth);
  const int branching = f.branching.value_or(c.gen_env.branching);
  const int count = f.count.value_or(c.gen_env.count);
  if (depth < 1 || branching < 1 || count < 1)
    throw ConfigError("gen-env: depth, branching and count must be >= 1");
  const fs::path dir = output_dir(c.paths.env_dataset, f.out);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(i);
    const auto tree = generate_synthetic_tree(seed, depth, branching);
    const auto path = dir / ("synthetic-" + std::to_string(seed) + ".tree");
    write_file(path, serialize_tree(tree));
    std::cout << path.string() << "\n";
  }
  return kExitOk;
}

}  // namespace
}  // namespace hkopt

int main(int argc, char** argv) {
  using namespace hkopt;
  CLI::App app{"Hierarchical GPU kernel optimizer"};
  app.require_subcommand(1);
  GlobalFlags g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Run config file (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random choice");
  app.add_flag("--mock", g.mock, "Use the mock runner and a scripted or identity coder");

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train the featurized policy with PPO");
  train->add_option("--out", tf.out, "Output directory");

  OptimizeFlags of;
  auto* opt = app.add_subcommand("optimize", "Optimize one task of the suite");
  opt->add_option("--task", of.task, "Task id")->required();
  opt->add_option("--out", of.out, "Output directory");
  opt->add_option("--max-steps", of.max_steps, "Coder call budget");
  opt->add_flag("--uniform-fallback", of.uniform_fallback,
                "Score actions uniformly when the policy backend fails");

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "Optimize a suite and report metrics");
  eval->add_option("--out", ef.out, "Output directory");
  eval->add_option("--suite", ef.suite, "Suite file overriding paths.suite");
  eval->add_option("--max-steps", ef.max_steps, "Coder call budget per task");
  eval->add_flag("--uniform-fallback", ef.uniform_fallback,
                 "Score actions uniformly when the policy backend fails");

  GenEnvFlags gf;
  auto* gen = app.add_subcommand("gen-env", "Write synthetic trajectory trees");
  gen->add_option("--depth", gf.depth, "Golden path length");
  gen->add_option("--branching", gf.branching, "Children per golden node");
  gen->add_option("--count", gf.count, "Number of trees");
  gen->add_option("--out", gf.out, "Output directory");

  for (auto* sub : {train, opt, eval, gen}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*train) return cmd_train(g, tf);
    if (*opt) return cmd_optimize(g, of);
    if (*eval) return cmd_eval(g, ef);
    return cmd_gen_env(g, gf);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
