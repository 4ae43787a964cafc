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

// Run configuration shared by every subcommand.

#ifndef HKOPT_CONFIG_HPP_
#define HKOPT_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hkopt/core_model.hpp"
#include "hkopt/http_clients.hpp"
#include "hkopt/offline_env.hpp"
#include "hkopt/orchestrator.hpp"
#include "hkopt/ppo.hpp"
#include "hkopt/runner_client.hpp"

namespace hkopt {

struct RunConfig {
  std::filesystem::path base_dir;
  json source;  // the parsed file, for provenance

  struct Paths {
    std::optional<std::filesystem::path> suite;
    std::optional<std::filesystem::path> hardware;
    std::optional<std::filesystem::path> env_dataset;
    std::optional<std::filesystem::path> example_bank;
    std::optional<std::filesystem::path> checkpoints;
    std::optional<std::filesystem::path> reports;
  } paths;

  struct Policy {
    std::string backend = "featurized";  // featurized | remote
    std::optional<std::filesystem::path> checkpoint;
    std::optional<HttpEndpoint> endpoint;
  } policy;

  struct Coder {
    std::string kind = "identity";  // identity | scripted | http
    std::optional<std::filesystem::path> script;
    std::optional<HttpEndpoint> endpoint;
  } coder;

  struct Runner {
    std::string mode = "mock";  // mock | process
    std::optional<std::filesystem::path> cost_table;
    std::vector<std::string> command;
    int processes = 1;
    double timeout_s = 60;
  } runner;

  std::uint64_t seed = 0;
  int max_steps = 8;
  int parallelism = 1;
  RewardConfig reward;
  TrainerConfig trainer;
  Tolerance tolerance;
  TimingProtocol timing;

  struct Inference {
    bool translate = true;
    bool sample = false;
    double temperature = 1.0;
    int examples_per_prompt = 3;
    int retries = 2;
    bool uniform_fallback = false;
    std::vector<double> fast_p{1.0, 2.0};
  } inference;

  struct GenEnv {
    int depth = 3;
    int branching = 3;
    int count = 1;
  } gen_env;

  /// Inference settings with the global seed, step bound and reward.
  [[nodiscard]] InferenceConfig inference_config() const {
    InferenceConfig c;
    c.max_steps = max_steps;
    c.translate = inference.translate;
    c.sample = inference.sample;
    c.temperature = inference.temperature;
    c.examples_per_prompt = inference.examples_per_prompt;
    c.retries = inference.retries;
    c.uniform_fallback = inference.uniform_fallback;
    c.seed = seed;
    c.reward = reward;
    c.timing = timing;
    c.tolerance = tolerance;
    return c;
  }

  [[nodiscard]] EnvConfig env_config() const { return {reward, max_steps}; }

  /// An input path that must be configured and exist.
  [[nodiscard]] const std::filesystem::path& require(
      const std::optional<std::filesystem::path>& p, const std::string& key) const {
    if (!p) throw ConfigError("config: " + key + " is not set");
    if (!std::filesystem::exists(*p))
      throw ConfigError("config: " + key + " not found: " + p->string());
    return *p;
  }
};

namespace detail {

inline std::optional<std::filesystem::path> opt_path(const json& j, const char* key,
                                                     const std::filesystem::path& base) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  std::filesystem::path p = j[key].get<std::string>();
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace detail

inline RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  c.source = j;
  try {
    const json empty = json::object();
    const auto& paths = j.contains("paths") ? j["paths"] : empty;
    c.paths.suite = detail::opt_path(paths, "suite", base_dir);
    c.paths.hardware = detail::opt_path(paths, "hardware", base_dir);
    c.paths.env_dataset = detail::opt_path(paths, "env_dataset", base_dir);
    c.paths.example_bank = detail::opt_path(paths, "example_bank", base_dir);
    c.paths.checkpoints = detail::opt_path(paths, "checkpoints", base_dir);
    c.paths.reports = detail::opt_path(paths, "reports", base_dir);

    if (j.contains("policy")) {
      const auto& p = j["policy"];
      c.policy.backend = p.value("backend", c.policy.backend);
      c.policy.checkpoint = detail::opt_path(p, "checkpoint", base_dir);
      if (p.contains("endpoint"))
        c.policy.endpoint = http_endpoint_from_json(p["endpoint"], "policy.endpoint");
    }
    if (c.policy.backend != "featurized" && c.policy.backend != "remote")
      throw ConfigError("config: policy.backend must be featurized or remote");
    if (c.policy.backend == "remote" && !c.policy.endpoint)
      throw ConfigError("config: policy.endpoint is required for the remote backend");

    if (j.contains("coder")) {
      const auto& k = j["coder"];
      c.coder.kind = k.value("kind", c.coder.kind);
      c.coder.script = detail::opt_path(k, "script", base_dir);
      if (k.contains("endpoint"))
        c.coder.endpoint = http_endpoint_from_json(k["endpoint"], "coder.endpoint");
    }
    if (c.coder.kind != "identity" && c.coder.kind != "scripted" && c.coder.kind != "http")
      throw ConfigError("config: coder.kind must be identity, scripted or http");
    if (c.coder.kind == "http" && !c.coder.endpoint)
      throw ConfigError("config: coder.endpoint is required for the http coder");

    if (j.contains("runner")) {
      const auto& r = j["runner"];
      c.runner.mode = r.value("mode", c.runner.mode);
      c.runner.cost_table = detail::opt_path(r, "cost_table", base_dir);
      c.runner.command = r.value("command", c.runner.command);
      c.runner.processes = r.value("processes", c.runner.processes);
      c.runner.timeout_s = r.value("timeout_s", c.runner.timeout_s);
    }
    if (c.runner.mode != "mock" && c.runner.mode != "process")
      throw ConfigError("config: runner.mode must be mock or process");

    c.seed = j.value("seed", c.seed);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.parallelism = j.value("parallelism", c.parallelism);
    if (c.max_steps < 0) throw ConfigError("config: max_steps must be >= 0");
    if (c.parallelism < 1) throw ConfigError("config: parallelism must be >= 1");
    if (j.contains("reward")) c.reward = reward_config_from_json(j["reward"]);
    c.reward.validate();
    if (j.contains("trainer")) c.trainer = trainer_config_from_json(j["trainer"]);
    if (j.contains("tolerance")) {
      c.tolerance.atol = j["tolerance"].value("atol", c.tolerance.atol);
      c.tolerance.rtol = j["tolerance"].value("rtol", c.tolerance.rtol);
    }
    if (j.contains("timing")) {
      c.timing.warmup = j["timing"].value("warmup", c.timing.warmup);
      c.timing.iters = j["timing"].value("iters", c.timing.iters);
    }
    if (j.contains("inference")) {
      const auto& i = j["inference"];
      c.inference.translate = i.value("translate", c.inference.translate);
      c.inference.sample = i.value("sample", c.inference.sample);
      c.inference.temperature = i.value("temperature", c.inference.temperature);
      c.inference.examples_per_prompt =
          i.value("examples_per_prompt", c.inference.examples_per_prompt);
      c.inference.retries = i.value("retries", c.inference.retries);
      c.inference.uniform_fallback = i.value("uniform_fallback", c.inference.uniform_fallback);
      c.inference.fast_p = i.value("fast_p", c.inference.fast_p);
    }
    if (!(c.inference.temperature > 0))
      throw ConfigError("config: inference.temperature must be positive");
    for (double p : c.inference.fast_p)
      if (p < 0) throw ConfigError("config: inference.fast_p values must be >= 0");
    if (j.contains("gen_env")) {
      c.gen_env.depth = j["gen_env"].value("depth", c.gen_env.depth);
      c.gen_env.branching = j["gen_env"].value("branching", c.gen_env.branching);
      c.gen_env.count = j["gen_env"].value("count", c.gen_env.count);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

/// Reads a config file; relative paths resolve against its directory.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const IoError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

}  // namespace hkopt

#endif  // HKOPT_CONFIG_HPP_
