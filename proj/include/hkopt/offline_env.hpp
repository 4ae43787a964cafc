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

// Tree-structured offline environment. Each node is a kernel variant with a
// recorded execution outcome; each edge is an optimization action. Episodes
// walk the tree from the reference root without touching any code generator
// or GPU.

#ifndef HKOPT_OFFLINE_ENV_HPP_
#define HKOPT_OFFLINE_ENV_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hkopt/action_space.hpp"
#include "hkopt/core_model.hpp"
#include "hkopt/error.hpp"
#include "hkopt/util.hpp"

namespace hkopt {

struct RewardConfig {
  double r_compile_fail = -0.6;
  double r_incorrect = -0.3;
  double r_correct_no_gain = 0.1;
  double r_gain_base = 0.5;
  double r_gain_scale = 0.5;
  double decay = 0.9;
  double stop_bonus_scale = 1.0;

  void validate() const {
    if (!(r_compile_fail < r_incorrect && r_incorrect < r_correct_no_gain &&
          r_correct_no_gain < r_gain_base))
      throw ValidationError(
          "reward config must satisfy compile_fail < incorrect < "
          "correct_no_gain < gain_base");
    if (!(decay > 0 && decay <= 1))
      throw ValidationError("reward decay must lie in (0, 1]");
  }
};

inline json to_json(const RewardConfig& c) {
  return {{"r_compile_fail", c.r_compile_fail},
          {"r_incorrect", c.r_incorrect},
          {"r_correct_no_gain", c.r_correct_no_gain},
          {"r_gain_base", c.r_gain_base},
          {"r_gain_scale", c.r_gain_scale},
          {"decay", c.decay},
          {"stop_bonus_scale", c.stop_bonus_scale}};
}

/// Missing keys keep their defaults.
inline RewardConfig reward_config_from_json(const json& j) {
  RewardConfig c;
  c.r_compile_fail = j.value("r_compile_fail", c.r_compile_fail);
  c.r_incorrect = j.value("r_incorrect", c.r_incorrect);
  c.r_correct_no_gain = j.value("r_correct_no_gain", c.r_correct_no_gain);
  c.r_gain_base = j.value("r_gain_base", c.r_gain_base);
  c.r_gain_scale = j.value("r_gain_scale", c.r_gain_scale);
  c.decay = j.value("decay", c.decay);
  c.stop_bonus_scale = j.value("stop_bonus_scale", c.stop_bonus_scale);
  c.validate();
  return c;
}

/// Graded reward for moving from a correct kernel `prev` to `next`:
/// compile failure < incorrect < correct without gain < improvement, the
/// improvement tier growing with log2 of the runtime ratio (capped at one
/// doubling), all scaled by decay^step_index.
inline double compute_reward(const ExecutionReport& prev,
                             const ExecutionReport& next, int step_index,
                             const RewardConfig& cfg) {
  if (!prev.correct())
    throw PreconditionError("compute_reward: previous kernel must be correct");
  double base;
  if (!next.compile_ok()) {
    base = cfg.r_compile_fail;
  } else if (!next.correct()) {
    base = cfg.r_incorrect;
  } else if (next.runtime_ms() >= prev.runtime_ms()) {
    base = cfg.r_correct_no_gain;
  } else {
    base = cfg.r_gain_base +
           cfg.r_gain_scale *
               std::min(1.0, std::log2(prev.runtime_ms() / next.runtime_ms()));
  }
  return base * std::pow(cfg.decay, step_index);
}

struct TrajectoryNode {
  std::string node_id;
  std::optional<std::string> parent_id;
  std::optional<OptimizationAction> incoming_action;
  KernelSource source;
  ExecutionReport report;
};

struct TreeEdge {
  std::string action_text;
  std::string child_id;
};

/// Validated, immutable trajectory tree.
class TrajectoryTree {
 public:
  /// Nodes are kept in the given order for serialization. Throws
  /// TreeLoadError naming the offending node.
  TrajectoryTree(KernelTask task, std::string root_id,
                 std::vector<TrajectoryNode> nodes)
      : task_(std::move(task)), root_id_(std::move(root_id)) {
    for (auto& n : nodes) {
      order_.push_back(n.node_id);
      if (!nodes_.emplace(n.node_id, std::move(n)).second)
        throw TreeLoadError("duplicate node id '" + order_.back() + "'");
    }
    auto root = nodes_.find(root_id_);
    if (root == nodes_.end())
      throw TreeLoadError("root node '" + root_id_ + "' not found");
    const auto& r = root->second;
    if (r.parent_id || r.incoming_action)
      throw TreeLoadError("root node '" + root_id_ +
                          "' must have no parent and no action");
    if (!r.report.compile_ok() || !r.report.correct())
      throw TreeLoadError("root node '" + root_id_ + "' must be correct");

    for (const auto& id : order_) {
      const auto& n = nodes_.at(id);
      if (id == root_id_) continue;
      if (!n.parent_id)
        throw TreeLoadError("node '" + id + "' has no parent (second root)");
      if (!n.incoming_action)
        throw TreeLoadError("node '" + id + "' has no incoming action");
      if (!nodes_.contains(*n.parent_id))
        throw TreeLoadError("orphan node '" + id + "': parent '" +
                            *n.parent_id + "' not found");
      auto& edges = children_[*n.parent_id];
      const std::string text = render_action(*n.incoming_action);
      for (const auto& e : edges)
        if (e.action_text == text)
          throw TreeLoadError("node '" + id + "' duplicates action '" + text +
                              "' under parent '" + *n.parent_id + "'");
      edges.push_back({text, id});
    }
    // Every node must reach the root; a cycle never does.
    for (const auto& id : order_) {
      std::string cur = id;
      std::size_t hops = 0;
      while (cur != root_id_) {
        const auto& n = nodes_.at(cur);
        if (!n.parent_id || ++hops > nodes_.size())
          throw TreeLoadError("node '" + id + "' is on a cycle or unreachable");
        cur = *n.parent_id;
      }
    }
  }

  [[nodiscard]] const KernelTask& task() const { return task_; }
  [[nodiscard]] const std::string& root_id() const { return root_id_; }
  [[nodiscard]] const TrajectoryNode& root() const { return nodes_.at(root_id_); }
  [[nodiscard]] const TrajectoryNode& node(const std::string& id) const {
    return nodes_.at(id);
  }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const std::vector<std::string>& node_order() const {
    return order_;
  }

  [[nodiscard]] const std::vector<TreeEdge>& children(
      const std::string& id) const {
    static const std::vector<TreeEdge> kNone;
    auto it = children_.find(id);
    return it == children_.end() ? kNone : it->second;
  }

  /// Number of edges on the longest root-to-leaf path.
  [[nodiscard]] int depth() const { return depth_from(root_id_); }

 private:
  int depth_from(const std::string& id) const {
    int best = 0;
    for (const auto& e : children(id)) best = std::max(best, 1 + depth_from(e.child_id));
    return best;
  }

  KernelTask task_;
  std::string root_id_;
  std::map<std::string, TrajectoryNode> nodes_;
  std::map<std::string, std::vector<TreeEdge>> children_;
  std::vector<std::string> order_;
};

// ---------------------------------------------------------------------------
// Tree file format: JSON Lines, a header record then one record per node.
// ---------------------------------------------------------------------------

inline std::string serialize_tree(const TrajectoryTree& tree) {
  std::string out;
  json header = {{"task_id", tree.task().task_id},
                 {"root_id", tree.root_id()},
                 {"task", to_json(tree.task())}};
  out += header.dump() + "\n";
  for (const auto& id : tree.node_order()) {
    const auto& n = tree.node(id);
    json rec = {
        {"node_id", n.node_id},
        {"parent_id", n.parent_id ? json(*n.parent_id) : json(nullptr)},
        {"action_text",
         n.incoming_action ? json(render_action(*n.incoming_action))
                           : json(nullptr)},
        {"language", language_name(n.source.language())},
        {"source_text", n.source.text()},
        {"compile_ok", n.report.compile_ok()},
        {"correct", n.report.correct()},
        {"runtime_ms", n.report.runtime_ms()},
        {"baseline_ms", n.report.baseline_ms()}};
    if (n.report.error_text()) rec["error_text"] = *n.report.error_text();
    out += rec.dump() + "\n";
  }
  return out;
}

inline TrajectoryTree parse_tree(std::string_view text,
                                 const std::string& origin = "tree") {
  auto lines = split_lines(text);
  std::vector<json> recs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      recs.push_back(json::parse(lines[i]));
    } catch (const json::parse_error& e) {
      throw TreeLoadError(origin + ":" + std::to_string(i + 1) +
                          ": malformed record: " + e.what());
    }
  }
  if (recs.empty()) throw TreeLoadError(origin + ": empty tree file");
  const json& header = recs.front();
  const std::string hctx = origin + " header";
  const auto task_id = detail::get<std::string>(header, "task_id", hctx);
  const auto root_id = detail::get<std::string>(header, "root_id", hctx);

  std::vector<TrajectoryNode> nodes;
  std::optional<std::string> root_text;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const json& r = recs[i];
    const auto id = detail::get<std::string>(r, "node_id", origin + " node record");
    const std::string ctx = origin + " node '" + id + "'";
    std::optional<std::string> parent;
    if (r.contains("parent_id") && !r["parent_id"].is_null())
      parent = detail::get<std::string>(r, "parent_id", ctx);
    std::optional<OptimizationAction> action;
    if (r.contains("action_text") && !r["action_text"].is_null()) {
      try {
        action = parse_action_text(detail::get<std::string>(r, "action_text", ctx));
      } catch (const ActionParseError& e) {
        throw TreeLoadError(ctx + ": " + e.what());
      }
      if (action->is_stop())
        throw TreeLoadError(ctx + ": stop cannot label an edge");
    }
    Language lang = parent ? Language::KernelDsl : Language::Reference;
    if (r.contains("language")) {
      auto l = language_from_name(detail::get<std::string>(r, "language", ctx));
      if (!l) throw TreeLoadError(ctx + ": unknown language");
      lang = *l;
    }
    try {
      nodes.push_back(TrajectoryNode{
          id, parent, action,
          KernelSource(lang, detail::get<std::string>(r, "source_text", ctx)),
          report_from_json(r, ctx)});
    } catch (const ValidationError& e) {
      throw TreeLoadError(ctx + ": " + e.what());
    } catch (const SchemaError& e) {
      throw TreeLoadError(e.what());
    }
    if (id == root_id) root_text = nodes.back().source.text();
  }

  KernelTask task;
  if (header.contains("task")) {
    try {
      task = task_from_json(header["task"], hctx + " task");
    } catch (const SchemaError& e) {
      throw TreeLoadError(e.what());
    }
  } else {
    task.task_id = task_id;
    task.description = task_id;
    task.reference_source = root_text.value_or("");
    task.input_spec = {TensorSpec{{1}, "float32", 0}};
  }
  if (task.task_id != task_id)
    throw TreeLoadError(hctx + ": task_id does not match embedded task");
  return TrajectoryTree(std::move(task), root_id, std::move(nodes));
}

inline TrajectoryTree load_tree(const std::filesystem::path& path) {
  return parse_tree(read_file(path), path.string());
}

/// All `*.tree` files in a directory, sorted by file name.
inline std::vector<std::shared_ptr<const TrajectoryTree>> load_env_dataset(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("environment dataset not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".tree")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::shared_ptr<const TrajectoryTree>> trees;
  for (const auto& f : files)
    trees.push_back(std::make_shared<const TrajectoryTree>(load_tree(f)));
  if (trees.empty())
    throw IoError("environment dataset has no .tree files: " + dir.string());
  return trees;
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct EnvConfig {
  RewardConfig reward;
  int max_steps = 8;
};

struct StepResult {
  Observation observation;
  double reward = 0;
  bool done = false;
  bool on_tree = false;
};

/// One episode over a shared tree. Moving onto a node whose kernel is not
/// correct ends the episode; an action with no matching edge keeps the
/// current node and is penalized like an incorrect result.
class TreeEnv {
 public:
  TreeEnv(std::shared_ptr<const TrajectoryTree> tree, HardwareSpec hardware,
          EnvConfig config = {})
      : tree_(std::move(tree)),
        hardware_(std::move(hardware)),
        config_(config),
        node_id_(tree_->root_id()) {}

  Observation reset() {
    node_id_ = tree_->root_id();
    history_.clear();
    done_ = false;
    return observation();
  }

  StepResult step(const OptimizationAction& action) {
    if (done_) throw PreconditionError("step called on a finished episode");
    const int step_index = static_cast<int>(history_.size());
    const double scale = std::pow(config_.reward.decay, step_index);
    const auto& cur = tree_->node(node_id_);
    StepResult res{observation(), 0.0, false, false};
    std::string outcome;

    if (action.is_stop()) {
      const double gain =
          tree_->root().report.runtime_ms() / cur.report.runtime_ms() - 1.0;
      res.reward = config_.reward.stop_bonus_scale * gain * scale;
      res.done = true;
      outcome = "stop";
    } else {
      const std::string text = render_action(action);
      const TreeEdge* edge = nullptr;
      for (const auto& e : tree_->children(node_id_))
        if (e.action_text == text) edge = &e;
      if (edge == nullptr) {
        res.reward = config_.reward.r_incorrect * scale;
        outcome = "off_tree";
      } else {
        const auto& child = tree_->node(edge->child_id);
        res.reward =
            compute_reward(cur.report, child.report, step_index, config_.reward);
        res.on_tree = true;
        outcome = child.report.summary();
        node_id_ = child.node_id;
        if (!child.report.correct()) res.done = true;
      }
    }
    history_.push_back({action, res.reward, outcome});
    if (static_cast<int>(history_.size()) >= config_.max_steps) res.done = true;
    done_ = res.done;
    res.observation = observation();
    return res;
  }

  [[nodiscard]] Observation observation() const {
    const auto& n = tree_->node(node_id_);
    return Observation{tree_->task(), n.source,
                       static_cast<int>(history_.size()), history_, hardware_};
  }

  [[nodiscard]] const std::string& node_id() const { return node_id_; }
  [[nodiscard]] bool done() const { return done_; }
  [[nodiscard]] const TrajectoryTree& tree() const { return *tree_; }
  [[nodiscard]] const EnvConfig& config() const { return config_; }
  [[nodiscard]] const HardwareSpec& hardware() const { return hardware_; }

 private:
  std::shared_ptr<const TrajectoryTree> tree_;
  HardwareSpec hardware_;
  EnvConfig config_;
  std::string node_id_;
  std::vector<HistoryEntry> history_;
  bool done_ = false;
};

/// Best achievable undiscounted return by exhaustive search over every
/// catalog action at every step (memoized on node and step).
inline double optimal_return(const TrajectoryTree& tree,
                             const EnvConfig& config) {
  std::map<std::pair<std::string, int>, double> memo;
  auto cat_for = [&](const std::string& id) {
    return enumerate_actions(tree.node(id).source);
  };
  std::map<std::string, ActionCatalog> catalogs;
  std::function<double(const std::string&, int)> best =
      [&](const std::string& id, int step) -> double {
    if (step >= config.max_steps) return 0.0;
    auto key = std::pair(id, step);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    if (!catalogs.contains(id)) catalogs.emplace(id, cat_for(id));
    const auto& cur = tree.node(id);
    const double scale = std::pow(config.reward.decay, step);
    double value = -std::numeric_limits<double>::infinity();
    for (const auto& a : catalogs.at(id).actions()) {
      double v;
      if (a.is_stop()) {
        v = config.reward.stop_bonus_scale *
            (tree.root().report.runtime_ms() / cur.report.runtime_ms() - 1.0) *
            scale;
      } else {
        const std::string text = render_action(a);
        const TreeEdge* edge = nullptr;
        for (const auto& e : tree.children(id))
          if (e.action_text == text) edge = &e;
        if (edge == nullptr) {
          v = config.reward.r_incorrect * scale + best(id, step + 1);
        } else {
          const auto& child = tree.node(edge->child_id);
          v = compute_reward(cur.report, child.report, step, config.reward);
          if (child.report.correct()) v += best(child.node_id, step + 1);
        }
      }
      value = std::max(value, v);
    }
    memo[key] = value;
    return value;
  };
  return best(tree.root_id(), 0);
}

// ---------------------------------------------------------------------------
// Synthetic trees
// ---------------------------------------------------------------------------

namespace synth {

inline constexpr std::array<std::string_view, 8> kOps{
    "linear", "relu", "max", "softmax", "matmul", "gelu", "layernorm", "exp"};

inline std::string chain_source(Rng& rng, int statements) {
  std::ostringstream os;
  os << "import torch\n\ndef kernel(x):\n";
  std::string prev = "x";
  for (int i = 0; i < statements; ++i) {
    const std::string name = "t" + std::to_string(i);
    os << "    " << name << " = " << kOps[rng.index(kOps.size())] << "(" << prev
       << ")\n";
    prev = name;
  }
  os << "    return " << prev << "\n";
  return os.str();
}

/// Appends a marker comment to the last line of the action's region. The
/// statement structure, and so the catalog, is unchanged.
inline std::string annotate(const std::string& text,
                            const OptimizationAction& action) {
  auto lines = split_lines(text);
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += lines[i];
    if (static_cast<int>(i) + 1 == action.region()->end_line()) {
      out += (lines[i].find("  # applied:") == std::string_view::npos)
                 ? "  # applied: "
                 : "; ";
      out += render_action(action);
    }
    out += "\n";
  }
  return out;
}

}  // namespace synth

/// Deterministic tree with one golden root-to-leaf path of strictly
/// decreasing runtimes. Every golden node has `branching` children; the
/// off-path ones are leaves that fail to compile, compute wrong results, or
/// run no faster than their parent.
inline TrajectoryTree generate_synthetic_tree(std::uint64_t seed, int depth,
                                              int branching) {
  if (depth < 1 || branching < 1)
    throw PreconditionError("synthetic tree needs depth >= 1 and branching >= 1");
  Rng rng(seed);
  const int statements = std::max(2, (branching + 2) / 3);
  const std::string root_text = synth::chain_source(rng, statements);
  const KernelSource root_src(Language::Reference, root_text);
  const auto catalog = enumerate_actions(root_src);
  std::vector<OptimizationAction> candidates(catalog.actions().begin(),
                                             catalog.actions().end() - 1);
  if (static_cast<int>(candidates.size()) < branching)
    throw PreconditionError("branching exceeds the synthetic action space");

  const double root_ms = rng.uniform(1.0, 10.0);
  KernelTask task;
  task.task_id = "synthetic-" + std::to_string(seed);
  task.description = "synthetic operator chain";
  task.reference_source = root_text;
  task.input_spec = {TensorSpec{{64, 64}, "float32", seed}};

  std::vector<TrajectoryNode> nodes;
  int next_id = 0;
  auto new_id = [&] { return "n" + std::to_string(next_id++); };
  nodes.push_back({new_id(), std::nullopt, std::nullopt, root_src,
                   ExecutionReport(true, true, root_ms, root_ms)});

  std::string golden_id = nodes.front().node_id;
  std::string golden_text = root_text;
  double golden_ms = root_ms;
  for (int level = 0; level < depth; ++level) {
    // Seeded partial shuffle picks `branching` distinct edge actions.
    std::vector<std::size_t> idx(candidates.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int i = 0; i < branching; ++i) {
      std::size_t j = i + rng.index(idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    const int golden_slot = static_cast<int>(rng.index(branching));
    std::string next_golden_id;
    std::string next_golden_text;
    double next_golden_ms = 0;
    for (int c = 0; c < branching; ++c) {
      const auto& action = candidates[idx[c]];
      const std::string id = new_id();
      const std::string text = synth::annotate(golden_text, action);
      KernelSource src(Language::KernelDsl, text);
      if (c == golden_slot) {
        const double ms = golden_ms * rng.uniform(0.5, 0.8);
        nodes.push_back({id, golden_id, action, src,
                         ExecutionReport(true, true, ms, root_ms)});
        next_golden_id = id;
        next_golden_text = text;
        next_golden_ms = ms;
        continue;
      }
      switch (rng.index(3)) {
        case 0:
          nodes.push_back({id, golden_id, action, src,
                           ExecutionReport::compile_failure(
                               "synthetic compile error", root_ms)});
          break;
        case 1:
          nodes.push_back({id, golden_id, action, src,
                           ExecutionReport(true, false, 0, root_ms,
                                           "synthetic output mismatch")});
          break;
        default:
          nodes.push_back({id, golden_id, action, src,
                           ExecutionReport(true, true,
                                           golden_ms * rng.uniform(1.0, 1.5),
                                           root_ms)});
          break;
      }
    }
    golden_id = next_golden_id;
    golden_text = next_golden_text;
    golden_ms = next_golden_ms;
  }
  std::string root_id = nodes.front().node_id;
  return TrajectoryTree(std::move(task), std::move(root_id), std::move(nodes));
}

/// Node ids along the golden path, root first: at each node the unique
/// correct child faster than its parent that itself has children, or the
/// fastest correct child at the last level.
inline std::vector<std::string> golden_path(const TrajectoryTree& tree) {
  std::vector<std::string> path{tree.root_id()};
  while (true) {
    const auto& cur = tree.node(path.back());
    const TrajectoryNode* best = nullptr;
    for (const auto& e : tree.children(cur.node_id)) {
      const auto& ch = tree.node(e.child_id);
      if (!ch.report.correct() ||
          ch.report.runtime_ms() >= cur.report.runtime_ms())
        continue;
      if (best == nullptr || ch.report.runtime_ms() < best->report.runtime_ms())
        best = &ch;
    }
    if (best == nullptr) break;
    path.push_back(best->node_id);
  }
  return path;
}

}  // namespace hkopt

#endif  // HKOPT_OFFLINE_ENV_HPP_
